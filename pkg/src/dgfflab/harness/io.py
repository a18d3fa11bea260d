"""Result tables, manifests, field dumps and run-length mask dumps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dgff import Domain, FieldSample
from ..geometry import LatticeBox
from ..levelset import OpenMask

CSV_HEADER = ("kind", "N", "lambda", "kappa", "K", "trials", "estimate", "ci_lo", "ci_hi", "seconds")


@dataclass(frozen=True)
class ResultRecord:
    kind: str
    N: int | None
    lam: float | None
    kappa: float | None
    K: int | None
    trials: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seconds: float | None = None

    def __post_init__(self):
        if not (self.ci_lo <= self.estimate <= self.ci_hi) and not math.isnan(self.estimate):
            raise ValueError(f"interval [{self.ci_lo}, {self.ci_hi}] does not bracket {self.estimate}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def records_csv(records, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.kind, _fmt(r.N), _fmt(r.lam), _fmt(r.kappa), _fmt(r.K), r.trials,
                    _fmt(r.estimate), _fmt(r.ci_lo), _fmt(r.ci_hi),
                    _fmt(r.seconds) if timing else ""])
    return buf.getvalue()


def write_results(records, path, timing: bool = False) -> None:
    Path(path).write_text(records_csv(records, timing))


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_HEADER:
        raise ValueError(f"{path} does not have the results header")
    return rows


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# fields: one JSON header line, then little-endian float64 values in x-major order


def dump_field(sample: FieldSample) -> bytes:
    box = sample.domain.box
    head = {"corner": list(box.corner), "shape": [box.width, box.height],
            "seed": sample.seed, "sampler": sample.sampler, "dtype": "<f8"}
    return (json.dumps(head) + "\n").encode() + np.ascontiguousarray(sample.values, dtype="<f8").tobytes()


def load_field(data: bytes) -> FieldSample:
    nl = data.index(b"\n")
    head = json.loads(data[:nl])
    w, h = head["shape"]
    vals = np.frombuffer(data[nl + 1:], dtype="<f8")
    if vals.size != w * h:
        raise ValueError(f"field dump holds {vals.size} values, header says {w * h}")
    box = LatticeBox(tuple(head["corner"]), w, h)
    return FieldSample(Domain.from_box(box), vals.reshape(w, h).copy(), head["seed"], head["sampler"])


# ---------------------------------------------------------------------------
# masks: JSON header line, then run lengths alternating closed/open, starting closed


def rle_encode(flat: np.ndarray) -> list[int]:
    flat = np.asarray(flat, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    return ([0] + runs) if flat[0] else runs


def rle_decode(runs, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos, val = 0, False
    for r in runs:
        out[pos:pos + r] = val
        pos += r
        val = not val
    if pos != size:
        raise ValueError(f"run lengths cover {pos} vertices, expected {size}")
    return out


def dump_mask(mask: OpenMask) -> str:
    box = mask.box
    head = {"corner": list(box.corner), "shape": [box.width, box.height],
            "lambda": "inf" if math.isinf(mask.lam) else mask.lam,
            "alpha": mask.alpha, "kind": mask.kind}
    return json.dumps(head) + "\n" + ",".join(map(str, rle_encode(mask.mask))) + "\n"


def load_mask(text: str) -> OpenMask:
    head_line, _, body = text.partition("\n")
    head = json.loads(head_line)
    w, h = head["shape"]
    body = body.strip()
    runs = [int(t) for t in body.split(",")] if body else []
    m = rle_decode(runs, w * h).reshape(w, h)
    lam = math.inf if head["lambda"] == "inf" else float(head["lambda"])
    return OpenMask(LatticeBox(tuple(head["corner"]), w, h), m, lam, float(head["alpha"]), head["kind"])

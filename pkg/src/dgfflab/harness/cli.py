"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 invariant failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..dgff import DENSE_LIMIT, Domain, greens_matrix, rect_green_columns, sample_dense, sample_spectral
from ..geometry import GeometryError, LatticeBox, box_vn
from ..levelset import open_mask
from ..schedule import (MP, ScheduleConfig, ScheduleError, epsilon_of_lambda, minimal_passing_K,
                        schedule_table, summability_check)
from .config import KINDS, ConfigError, load_config
from .experiments import manifest_for, run_experiment
from .io import dump_field, dump_mask, read_results, write_manifest, write_results
from .plot import svg_plot

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _point(text: str) -> tuple[int, int]:
    try:
        x, y = (int(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from exc
    return x, y


def _threshold(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _box(args) -> LatticeBox:
    if args.N is not None:
        return box_vn(args.N)
    if args.width is None or args.height is None:
        raise ConfigError("give --N, or both --width and --height")
    return LatticeBox(tuple(args.corner), args.width, args.height)


def cmd_sample(args) -> int:
    box = _box(args)
    domain = Domain.from_box(box)
    if args.sampler == "dense":
        s = sample_dense(domain, args.seed)
    else:
        s = sample_spectral(box.width, box.height, args.seed, box.corner)
    if args.out:
        Path(args.out).write_bytes(dump_field(s))
    if args.mask_out:
        if args.lam is None:
            raise ConfigError("--mask-out needs --lambda")
        Path(args.mask_out).write_text(dump_mask(open_mask(s, args.lam, args.alpha)))
    v = s.values
    summary = {"box": [box.xmin, box.ymin, box.width, box.height], "seed": args.seed,
               "sampler": s.sampler, "min": float(v.min()), "max": float(v.max()),
               "mean": float(v.mean())}
    if args.lam is not None:
        summary["open_fraction"] = float(open_mask(s, args.lam, args.alpha).mask.mean())
    print(json.dumps(summary))
    return EXIT_OK


def cmd_greens(args) -> int:
    box = _box(args)
    u, v = args.u, args.v
    if u not in box or v not in box:
        raise ConfigError("u and v must lie in the box")
    domain = Domain.from_box(box)
    if domain.n_interior <= DENSE_LIMIT:
        g = greens_matrix(domain)(u, v)
        method = "dense"
    else:
        col = rect_green_columns(box.width, box.height, np.array([box.local(u)]))[0]
        g = float(col[box.local(v)])
        method = "spectral"
    print(json.dumps({"u": list(u), "v": list(v), "G": g, "method": method}))
    return EXIT_OK


def cmd_schedule(args) -> int:
    cfg = ScheduleConfig(C2=args.C2, C4=args.C4, c_prime=args.c_prime, lambda0=args.lambda0,
                         K=args.K, delta=args.delta)
    table = schedule_table(cfg, args.lam, args.R)
    rows = table.rows()
    csv_lines = ["r,epsilon,delta,Delta,c,K"]
    csv_lines += [f"{r['r']},{r['epsilon']},{r['delta']},{r['Delta']},{r['c']},{r['K']}" for r in rows]
    K_min = minimal_passing_K(cfg, 1 / 16)
    eol = epsilon_of_lambda(cfg, args.lam, K_min)
    summ = summability_check(cfg, cfg.K, cfg.delta)
    summary = {
        "lambda": args.lam,
        "K_lambda": f"2^{eol.k}",
        "epsilon_lambda": MP.nstr(eol.epsilon, 17),
        "log_epsilon_lambda": MP.nstr(eol.log_epsilon, 17),
        "b": MP.nstr(eol.b, 17),
        "c": MP.nstr(cfg.c_value, 17),
        "implied_a": MP.nstr(eol.implied_a, 17),
        "provenance": eol.provenance,
        "minimal_summable_K_delta_1/16": f"2^{K_min.bit_length() - 1}",
        "summability": {"K": f"2^{cfg.K.bit_length() - 1}", "delta": cfg.delta, "passed": summ.passed,
                        "total": MP.nstr(summ.total, 17), "reason": summ.reason},
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "schedule.csv").write_text("\n".join(csv_lines) + "\n")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    else:
        print("\n".join(csv_lines))
        print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config, kind=args.kind, workers=args.workers, seed=args.seed, out=args.out)
    if cfg.kind != args.kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match {args.kind!r}")
    out = Path(args.out or cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = run_experiment(cfg)
    ended = time.time()
    write_results(result.records, out / "results.csv", timing=cfg.timing)
    write_manifest(manifest_for(cfg, result, started, ended), out / "manifest.json")
    for r in result.records:
        print(f"{r.kind} N={r.N} lambda={r.lam} estimate={r.estimate:.6g} [{r.ci_lo:.6g}, {r.ci_hi:.6g}]")
    if result.violations:
        for v in result.violations:
            print(f"invariant violated: {v}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        rows = read_results(args.csv)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    Path(args.out).write_text(svg_plot(rows, title=args.title or Path(args.csv).name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfflab", description="Level sets of the 2D discrete Gaussian free field.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def box_args(q):
        q.add_argument("--N", type=int, help="use the box V_N")
        q.add_argument("--width", type=int)
        q.add_argument("--height", type=int)
        q.add_argument("--corner", type=_point, default=(0, 0))

    q = sub.add_parser("sample", help="sample a field and optionally its open mask")
    box_args(q)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--sampler", choices=("dense", "spectral"), default="spectral")
    q.add_argument("--out", help="binary field dump")
    q.add_argument("--lambda", dest="lam", type=_threshold)
    q.add_argument("--alpha", type=float, default=0.0)
    q.add_argument("--mask-out", help="run-length mask dump (needs --lambda)")
    q.set_defaults(fn=cmd_sample)

    q = sub.add_parser("greens", help="Green's function G(u, v) of a box")
    box_args(q)
    q.add_argument("--u", type=_point, required=True)
    q.add_argument("--v", type=_point, required=True)
    q.set_defaults(fn=cmd_greens)

    q = sub.add_parser("schedule", help="constant schedule table and summary")
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)
    q.add_argument("--R", type=int, default=8)
    q.add_argument("--K", type=int, default=2 ** 32)
    q.add_argument("--delta", type=float, default=1 / 16)
    q.add_argument("--C2", type=float, default=1.0)
    q.add_argument("--C4", type=float, default=2.0)
    q.add_argument("--c-prime", dest="c_prime", type=float, default=1.0)
    q.add_argument("--lambda0", type=float, default=1.0)
    q.add_argument("--out", help="directory for schedule.csv and summary.json")
    q.set_defaults(fn=cmd_schedule)

    q = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    q.add_argument("kind", choices=KINDS)
    q.add_argument("--config", required=True)
    q.add_argument("--out")
    q.add_argument("--workers", type=int)
    q.add_argument("--seed", type=int)
    q.set_defaults(fn=cmd_experiment)

    q = sub.add_parser("plot", help="log-log SVG plot of a results table")
    q.add_argument("csv")
    q.add_argument("--out", required=True)
    q.add_argument("--title")
    q.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ScheduleError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

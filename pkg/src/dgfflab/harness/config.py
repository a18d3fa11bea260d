"""Experiment configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

KINDS = ("crossing", "chemdist", "parallelogram", "fluctuation", "contour")
ANNULI = ("parallelogram", "square")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _lam(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"threshold {v!r} is not a number or 'inf'")
    if not v >= 0:
        raise ConfigError(f"threshold {v!r} must be nonnegative")
    return float(v)


def _int_list(name, v) -> list[int]:
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name} must be a nonempty list")
    if any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        raise ConfigError(f"{name} must hold integers")
    return list(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run; ``lam`` is spelled ``lambda`` in JSON."""

    kind: str
    N: list[int] = field(default_factory=lambda: [64, 128, 256, 512])
    lam: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0])
    kappa: float = 0.5
    K: int = 4
    trials: int = 200
    seed: int = 0
    out: str | None = None
    workers: int = 1
    timing: bool = False
    alpha: float = 0.0
    # chemdist: attempts allowed per cell, as a multiple of trials
    rejection_factor: int = 10
    # parallelogram: width, height offset and L/w ratios
    w: int = 10
    h: int = 0
    ratios: list[int] = field(default_factory=lambda: [20, 32, 64, 128])
    # fluctuation: side of U minus one
    ell: int = 4
    # contour: annulus shape; a square annulus uses outer_side
    annulus: str = "parallelogram"
    outer_side: int = 61

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        N = _int_list("N", self.N)
        if any(n < 2 or n % 2 for n in N):
            raise ConfigError("every N must be an even integer >= 2")
        if not isinstance(self.lam, list) or not self.lam:
            raise ConfigError("lambda must be a nonempty list")
        object.__setattr__(self, "lam", [_lam(v) for v in self.lam])
        if not 0 < self.kappa <= 1:
            raise ConfigError("kappa must lie in (0, 1]")
        for name in ("K", "trials", "workers", "rejection_factor", "w", "ell", "outer_side"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if not isinstance(self.h, int) or self.h < 0:
            raise ConfigError("h must be a nonnegative integer")
        if not isinstance(self.alpha, (int, float)) or not math.isfinite(self.alpha):
            raise ConfigError("alpha must be a finite number")
        _int_list("ratios", self.ratios)
        if self.annulus not in ANNULI:
            raise ConfigError(f"annulus must be one of {ANNULI}")
        if self.kind == "chemdist" and len(set(N)) < 3:
            raise ConfigError("chemdist needs at least three distinct N for the exponent fit")
        if self.kind == "parallelogram" and self.w < 10:
            raise ConfigError("a good parallelogram needs w >= 10")
        if self.kind == "contour" and self.annulus == "square":
            if self.outer_side % 2 == 0 or self.outer_side < 2 * self.w + 3:
                raise ConfigError("outer_side must be odd and at least 2w + 3")

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = ["inf" if math.isinf(v) else v for v in d.pop("lam")]
        return d


_KEYS = {f.name for f in fields(ExperimentConfig)} - {"lam"} | {"lambda"}


def config_from_dict(d: dict, **overrides) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(d) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    if "kind" not in d:
        raise ConfigError("configuration needs a 'kind'")
    d = dict(d)
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    try:
        return ExperimentConfig(**d)
    except TypeError as exc:  # wrong value shapes surface here
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(d, **overrides)

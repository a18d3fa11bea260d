"""Binomial intervals and log-log exponent fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = stats.norm.ppf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # clamp the rounding noise so the interval always brackets p
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    slope_se: float
    ci_lo: float
    ci_hi: float
    n_points: int


def fit_exponent(points: Sequence[tuple[float, float]], confidence: float = 0.95) -> ExponentFit:
    """Least squares of ``log d`` on ``log N`` with a t-based interval on the slope."""
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(np.unique(arr[:, 0])) < 3:
        raise ValueError("need at least 3 distinct N")
    if (arr <= 0).any():
        raise ValueError("N and distances must be positive")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = n - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    t = stats.t.ppf(0.5 + confidence / 2, dof) if dof > 0 else float("inf")
    return ExponentFit(slope, intercept, se, float(slope - t * se), float(slope + t * se), n)

"""Monte Carlo experiments over grids of cells.

Every trial draws its field from a seed that is a pure function of
``(master seed, cell index, trial index)``, and results are merged in index
order, so outputs do not depend on the number of worker processes.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .. import __version__
from ..dgff import (Domain, FieldSample, conditional_ring_statistics, fluctuation_tail_experiment,
                    ring_mask, sample_spectral)
from ..geometry import Annulus, GeometryError, LatticeBox, box_vl, box_vn, make_parallelogram, rotate_and_assemble
from ..levelset import crossing_exists, one_sided_mask, open_mask, outermost_open_contour, side_to_side_distance
from ..rng import trial_seed
from ..schedule import rho, trivial_decay_bound
from .config import ConfigError, ExperimentConfig
from .io import ResultRecord
from .stats import fit_exponent, wilson_interval

VAR_Y_BOUND = 16.0
BOUND_TOL = 1e-9


class InvariantViolation(RuntimeError):
    """A deterministic invariant failed during an experiment (CLI exit code 3)."""


@dataclass
class RunResult:
    records: list[ResultRecord]
    cells: list[dict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


def _map(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


def _sample_on(box: LatticeBox, seed: int) -> FieldSample:
    return sample_spectral(box.width, box.height, seed, box.corner)


def _restrict(sample: FieldSample, box: LatticeBox) -> FieldSample:
    return FieldSample(Domain.from_box(box), sample.restrict(box), sample.seed, sample.sampler)


def _binomial_record(kind, N, lam, cfg, hits, trials, seconds) -> ResultRecord:
    lo, hi = wilson_interval(hits, trials)
    return ResultRecord(kind, N, lam, cfg.kappa, cfg.K, trials, hits / trials, lo, hi, seconds)


# ---------------------------------------------------------------------------
# crossing


def crossing_band(N: int, kappa: float) -> LatticeBox:
    """Central square of ``V_N`` with ``ceil(kappa N) + 1`` columns.

    An open left-right crossing of it has span at least ``kappa N``.
    """
    side = math.ceil(kappa * N) + 1
    lo = -(side // 2)
    band = LatticeBox((lo, lo), side, side)
    if not box_vn(N).contains_box(band):
        raise GeometryError("crossing band leaves V_N")
    return band


def _crossing_trial(task) -> bool:
    N, lam, kappa, seed = task
    s = _sample_on(box_vn(2 * N), seed)
    return crossing_exists(open_mask(s, lam), crossing_band(N, kappa))


def run_crossing(cfg: ExperimentConfig) -> RunResult:
    out = RunResult([])
    cell = 0
    for lam in cfg.lam:
        for N in cfg.N:
            t0 = time.perf_counter()
            tasks = [(N, lam, cfg.kappa, trial_seed(cfg.seed, cell, t)) for t in range(cfg.trials)]
            hits = sum(_map(_crossing_trial, tasks, cfg.workers))
            rec = _binomial_record("crossing", N, lam, cfg, hits, cfg.trials, time.perf_counter() - t0)
            out.records.append(rec)
            info = {"cell": cell, "N": N, "lambda": lam, "hits": hits,
                    "event": "open left-right crossing of the central "
                             f"{crossing_band(N, cfg.kappa).width}-column square of V_N"}
            if not math.isinf(lam) and rho(lam) < 0.25:
                info["trivial_bound"] = trivial_decay_bound(lam, cfg.kappa, N)
            out.cells.append(info)
            cell += 1
    return out


# ---------------------------------------------------------------------------
# chemical distance


def chem_box(N: int) -> LatticeBox:
    """The ``N x N`` box with corner ``(-N/2, -N/2)``; its sides are ``N - 1`` apart."""
    return LatticeBox((-(N // 2), -(N // 2)), N, N)


def _chem_trial(task) -> int | None:
    N, lam, side, seed = task
    s = _restrict(_sample_on(box_vn(2 * N), seed), chem_box(N))
    mask = open_mask(s, lam) if side == "two_sided" else one_sided_mask(s, -lam)
    return side_to_side_distance(mask)


def _mean_interval(xs, confidence=0.95) -> tuple[float, float, float]:
    a = np.asarray(xs, dtype=float)
    m = float(a.mean())
    if a.size < 2:
        return m, m, m
    half = float(stats.t.ppf(0.5 + confidence / 2, a.size - 1) * a.std(ddof=1) / math.sqrt(a.size))
    return m, m - half, m + half


def run_chemdist(cfg: ExperimentConfig) -> RunResult:
    out = RunResult([])
    cap = cfg.rejection_factor * cfg.trials
    cell = 0
    for side in ("two_sided", "one_sided"):
        for lam in cfg.lam:
            points = []
            for N in cfg.N:
                t0 = time.perf_counter()
                accepted: list[int] = []
                attempts = 0
                while len(accepted) < cfg.trials and attempts < cap:
                    n = min(cap - attempts, max(cfg.trials - len(accepted), 4 * cfg.workers))
                    tasks = [(N, lam, side, trial_seed(cfg.seed, cell, a))
                             for a in range(attempts, attempts + n)]
                    for d in _map(_chem_trial, tasks, cfg.workers):
                        if len(accepted) >= cfg.trials:
                            break
                        attempts += 1
                        if d is not None:
                            accepted.append(d)
                secs = time.perf_counter() - t0
                info = {"cell": cell, "side": side, "N": N, "lambda": lam,
                        "accepted": len(accepted), "attempts": attempts}
                if accepted:
                    m, lo, hi = _mean_interval(accepted)
                    points.extend((N - 1, d) for d in accepted)
                    info["min_distance"] = min(accepted)
                else:
                    m = lo = hi = math.nan
                    info["unfit"] = True
                out.records.append(ResultRecord(f"chemdist_{side}", N, lam, cfg.kappa, cfg.K,
                                                len(accepted), m, lo, hi, secs))
                out.cells.append(info)
                cell += 1
            ns = {p[0] for p in points}
            if len(ns) >= 3 and all(d > 0 for _, d in points):
                fit = fit_exponent(points)
                out.records.append(ResultRecord(f"chemdist_fit_{side}", None, lam, cfg.kappa, cfg.K,
                                                len(points), fit.slope, fit.ci_lo, fit.ci_hi, None))
                out.cells.append({"fit": side, "lambda": lam, "slope": fit.slope,
                                  "slope_se": fit.slope_se, "intercept": fit.intercept,
                                  "abscissa": "N - 1 (side-to-side lattice distance)"})
            else:
                out.cells.append({"fit": side, "lambda": lam, "unfit": True})
    return out


# ---------------------------------------------------------------------------
# parallelogram crossings


def parallelogram_setup(w: int, h: int, ratio: int):
    """The good parallelogram ``(0, 0, 16 w, h, w)`` and the box ``V_L(v0)``, ``L = ratio * w``."""
    D = make_parallelogram(0, 0, 16 * w, h, w)
    L = ratio * w
    box = box_vl(D.anchor, L)
    pts = D.lattice_points()
    inner = box.expand(-1)
    if not ((pts[:, 0] >= inner.xmin).all() and (pts[:, 0] <= inner.xmax).all()
            and (pts[:, 1] >= inner.ymin).all() and (pts[:, 1] <= inner.ymax).all()):
        raise GeometryError(f"L/w = {ratio} is too small: the parallelogram leaves the interior of V_L(v0)")
    return D, box


def _parallelogram_trial(task) -> bool:
    w, h, ratio, lam, alpha, seed = task
    D, box = _setup_cached(w, h, ratio)
    return crossing_exists(open_mask(_sample_on(box, seed), lam, alpha), D)


@lru_cache(maxsize=16)
def _setup_cached(w, h, ratio):
    return parallelogram_setup(w, h, ratio)


def run_parallelogram(cfg: ExperimentConfig) -> RunResult:
    out = RunResult([])
    for ratio in cfg.ratios:
        try:
            parallelogram_setup(cfg.w, cfg.h, ratio)
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc
    cell = 0
    for lam in cfg.lam:
        for ratio in cfg.ratios:
            t0 = time.perf_counter()
            tasks = [(cfg.w, cfg.h, ratio, lam, cfg.alpha, trial_seed(cfg.seed, cell, t))
                     for t in range(cfg.trials)]
            hits = sum(_map(_parallelogram_trial, tasks, cfg.workers))
            L = ratio * cfg.w
            rec = _binomial_record("parallelogram", L, lam, cfg, hits, cfg.trials, time.perf_counter() - t0)
            out.records.append(rec)
            side = "above" if rec.ci_lo > 7 / 8 else "below" if rec.ci_hi < 7 / 8 else "straddles"
            out.cells.append({"cell": cell, "lambda": lam, "ratio": ratio, "L": L, "w": cfg.w,
                              "h": cfg.h, "alpha": cfg.alpha, "hits": hits, "versus_7/8": side})
            cell += 1
    return out


# ---------------------------------------------------------------------------
# harmonic fluctuations


def fluctuation_setup(N: int, ell: int):
    """Field on ``V_2N``, harmonic extension from ``dV_N``, oscillation over a centred box of side ``ell + 1``."""
    lo = -(ell // 2)
    return box_vn(2 * N), box_vn(N), LatticeBox((lo, lo), ell + 1, ell + 1)


def _fluctuation_cell(task):
    N, ell, eps, trials, seed = task
    D, B, U = fluctuation_setup(N, ell)
    return fluctuation_tail_experiment(D, B, U, eps, trials, seed)


def run_fluctuation(cfg: ExperimentConfig) -> RunResult:
    out = RunResult([])
    tasks, keys = [], []
    cell = 0
    for eps in cfg.lam:
        for N in cfg.N:
            tasks.append((N, cfg.ell, eps, cfg.trials, trial_seed(cfg.seed, cell, 0)))
            keys.append((cell, eps, N))
            cell += 1
    t0 = time.perf_counter()
    try:
        results = _map(_fluctuation_cell, tasks, cfg.workers)
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    secs = (time.perf_counter() - t0) / max(1, len(tasks))
    for (cell, eps, N), r in zip(keys, results):
        out.records.append(ResultRecord("fluctuation", N, eps, cfg.kappa, cfg.K, r.trials,
                                        r.estimate, r.ci_lo, r.ci_hi, secs))
        out.cells.append({"cell": cell, "N": N, "eps": eps, "ell": r.ell, "L": r.L,
                          "hits": r.hits, "tail_bound": r.bound})
    return out


# ---------------------------------------------------------------------------
# outermost contours


@lru_cache(maxsize=8)
def contour_annulus(shape: str, w: int, h: int, outer_side: int) -> Annulus:
    if shape == "parallelogram":
        return rotate_and_assemble(make_parallelogram(0, 0, 16 * w, h, w))
    return Annulus.square((0, 0), 2 * w + 1, outer_side)


def contour_trial(sample: FieldSample, annulus: Annulus, w: int, lam: float, alpha: float) -> dict:
    """Contour statistics of one field on one annulus.

    ``X`` is the mean of ``eta + alpha`` over the boundary ring of
    ``V_2w(v0)``.  When an outermost open contour exists, its conditional
    mean is the ring mean of the harmonic extension of ``eta + alpha`` from
    the contour inward, and ``var_y`` is the ring variance under the Green's
    function of the enclosed set.
    """
    outer = annulus.outer
    ring = ring_mask(outer, annulus.center, w)
    vals = sample.restrict(outer) + alpha
    res = {"x": float(vals[ring].mean()), "contour": False}
    c = outermost_open_contour(open_mask(sample, lam, alpha), annulus)
    if c is None:
        return res
    cyc = c.vertex_mask()
    cond, var_y = conditional_ring_statistics(np.where(cyc, vals, 0.0), c.enclosed, ring)
    res.update(contour=True, length=c.length, cond_mean=cond, var_y=var_y)
    return res


def _contour_trial(task) -> dict:
    shape, w, h, outer_side, lam, alpha, seed = task
    ann = contour_annulus(shape, w, h, outer_side)
    return contour_trial(_sample_on(ann.outer.expand(1), seed), ann, w, lam, alpha)


def run_contour(cfg: ExperimentConfig) -> RunResult:
    out = RunResult([])
    try:
        ann = contour_annulus(cfg.annulus, cfg.w, cfg.h, cfg.outer_side)
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    for cell, lam in enumerate(cfg.lam):
        t0 = time.perf_counter()
        tasks = [(cfg.annulus, cfg.w, cfg.h, cfg.outer_side, lam, cfg.alpha, trial_seed(cfg.seed, cell, t))
                 for t in range(cfg.trials)]
        res = _map(_contour_trial, tasks, cfg.workers)
        found = [r for r in res if r["contour"]]
        bad_mean = [t for t, r in enumerate(res) if r["contour"] and abs(r["cond_mean"]) > lam + BOUND_TOL]
        bad_var = [t for t, r in enumerate(res) if r["contour"] and r["var_y"] > VAR_Y_BOUND]
        rec = _binomial_record("contour", ann.outer.width - 1, lam, cfg, len(found), cfg.trials,
                               time.perf_counter() - t0)
        out.records.append(rec)
        xs = [r["x"] for r in res]
        out.cells.append({
            "cell": cell, "lambda": lam, "alpha": cfg.alpha, "annulus": cfg.annulus,
            "contours": len(found), "conditional_mean_violations": len(bad_mean),
            "var_y_violations": len(bad_var),
            "max_abs_conditional_mean": max((abs(r["cond_mean"]) for r in found), default=None),
            "max_var_y": max((r["var_y"] for r in found), default=None),
            "mean_x": float(np.mean(xs)), "var_x": float(np.var(xs)),
        })
        out.violations += [f"lambda={lam} trial {t}: |conditional mean| exceeds lambda" for t in bad_mean]
        out.violations += [f"lambda={lam} trial {t}: Var(Y) exceeds {VAR_Y_BOUND}" for t in bad_var]
    return out


RUNNERS = {
    "crossing": run_crossing,
    "chemdist": run_chemdist,
    "parallelogram": run_parallelogram,
    "fluctuation": run_fluctuation,
    "contour": run_contour,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.kind](cfg)


def manifest_for(cfg: ExperimentConfig, result: RunResult, started: float, ended: float) -> dict:
    return {
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "ended": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(ended)),
        "wall_seconds": ended - started,
        "cells": result.cells,
        "violations": result.violations,
    }

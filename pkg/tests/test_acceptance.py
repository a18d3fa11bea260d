"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line straight to the
terminal (bypassing capture) and then asserts the same verdict.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from dgfflab.dgff import (
    Domain, FieldSample, boundary_greens_sums, greens_matrix, log_correlation_report, markov_decompose,
    sample_dense, spectral_covariance, spectral_fields,
)
from dgfflab.geometry import Annulus, LatticeBox
from dgfflab.harness.cli import main
from dgfflab.harness.config import config_from_dict
from dgfflab.harness.experiments import run_chemdist, run_contour, run_crossing
from dgfflab.levelset import chemical_distance, mask_from_array, open_circuit_exists, outermost_open_contour
from dgfflab.pathtree import (
    EnsembleSpec, build_ensemble_tree, drifted_walk, ensemble_membership, loop_erase, untamed_flow,
)
from dgfflab.rng import make_rng, trial_rng
from dgfflab.schedule import (
    MP, ScheduleConfig, c_schedule, delta_schedule, epsilon_schedule, k_thresholds, log_K0, log_K_r,
    minimal_passing_K, summability_check, trivial_decay_bound,
)

from oracles import brute_outermost, cycle_area2, floyd_warshall, planted_annulus_mask, scale_by_loop, surrounding_cycles


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def box_domain(w, h, corner=(0, 0)) -> Domain:
    return Domain.from_box(LatticeBox(corner, w, h))


# ---------------------------------------------------------------------------
# 1. sampler correctness


def test_criterion_01_sampler_correctness(report):
    t0 = time.perf_counter()
    d8 = box_domain(8, 8)
    spec = spectral_covariance(8, 8)
    dense = greens_matrix(d8).full()
    err8 = float(np.max(np.abs(spec - dense)))
    t_exact = time.perf_counter() - t0

    t0 = time.perf_counter()
    d = box_domain(16, 16)
    inner = d.interior_mask
    idx = np.flatnonzero(inner.ravel())
    exact = greens_matrix(d).full()[np.ix_(idx, idx)]
    n, batch = 200_000, 20_000
    s1 = np.zeros((idx.size, idx.size))
    s2 = np.zeros_like(s1)
    for k in range(n // batch):
        f = sample_dense(d, 1000 + k, size=batch)[:, inner]
        s1 += f.T @ f
        s2 += (f * f).T @ (f * f)
    emp = s1 / n
    se = np.sqrt((s2 / n - emp ** 2) / n)
    z = (np.abs(emp - exact) / se)[np.triu_indices(idx.size)]
    frac = float((z <= 3).mean())
    t_mc = time.perf_counter() - t0

    ok = err8 <= 1e-8 and t_exact < 1 and frac >= 0.99 and t_mc < 120
    report(1, ok, f"8x8 max|spectral - dense| = {err8:.2e} ({t_exact:.2f} s); "
                  f"16x16 {frac:.4f} of {z.size} entries within 3 SE ({t_mc:.1f} s)")


# ---------------------------------------------------------------------------
# 2. Green oracle


def test_criterion_02_green_oracle(report):
    g3 = greens_matrix(box_domain(3, 3))((1, 1), (1, 1))
    rng = np.random.default_rng(2024)
    sym = mono = 0.0
    for _ in range(20):
        w1, h1 = (int(x) for x in rng.integers(3, 12, size=2))
        dx, dy = (int(x) for x in rng.integers(0, 5, size=2))
        small = LatticeBox((dx, dy), w1, h1)
        big = LatticeBox((0, 0), w1 + dx + int(rng.integers(0, 5)), h1 + dy + int(rng.integers(0, 5)))
        Gs, Gb = greens_matrix(Domain.from_box(small)), greens_matrix(Domain.from_box(big))
        full = Gb.full()
        sym = max(sym, float(np.max(np.abs(full - full.T))))
        pts = [tuple(p) for p in small.vertices().tolist()]
        for u in pts:
            for v in pts:
                mono = max(mono, Gs(u, v) - Gb(u, v))
    ok = g3 == 1.0 and sym <= 1e-10 and mono <= 1e-10
    report(2, ok, f"3x3 centre G = {g3!r}; max asymmetry {sym:.1e}; "
                  f"max G_small - G_big {mono:.1e} over 20 nested pairs")


# ---------------------------------------------------------------------------
# 3. Markov decomposition


def test_criterion_03_markov_decomposition(report):
    B = LatticeBox((4, 4), 8, 8)
    full = box_domain(16, 16)
    ring = B.boundary_mask()
    ring_pts = [(x + 4, y + 4) for x, y in np.argwhere(ring).tolist()]
    # harmonic extension is linear in the boundary data: one column per boundary vertex
    basis = np.zeros((len(ring_pts), 8, 8))
    id_err = res = 0.0
    for k, p in enumerate(ring_pts):
        vals = np.zeros((16, 16))
        vals[p] = 1.0
        inner, H = markov_decompose(FieldSample(full, vals, 0, "basis"), B)
        basis[k] = H.values
    n = 100_000
    f = spectral_fields(16, 16, make_rng(303), n)
    for t in range(20):
        s = FieldSample(full, f[t], t, "spectral")
        inner, H = markov_decompose(s, B)
        id_err = max(id_err, float(np.max(np.abs(inner.values + H.values - s.restrict(B)))))
        res = max(res, H.residual())
        lin = np.tensordot(f[t][tuple(np.array(ring_pts).T)], basis, axes=1)
        assert np.allclose(lin, H.values, atol=1e-10)
    bvals = f[:, [p[0] for p in ring_pts], [p[1] for p in ring_pts]]
    H = np.tensordot(bvals, basis, axes=1)
    eta_b = (f[:, 4:12, 4:12] - H)[:, 1:7, 1:7].reshape(n, -1)
    H_in = H[:, 1:7, 1:7].reshape(n, -1)
    a = (eta_b - eta_b.mean(0)) / eta_b.std(0)
    b = np.column_stack([H_in, bvals])
    b = (b - b.mean(0)) / b.std(0)
    corr = float(np.max(np.abs(a.T @ b / n)))
    ok = id_err <= 1e-12 and res <= 1e-10 and corr <= 0.02
    report(3, ok, f"identity error {id_err:.1e}; harmonic residual {res:.1e}; "
                  f"max |corr(eta^B, H^B)| = {corr:.4f} over {n} fields (8x8 in 16x16)")


# ---------------------------------------------------------------------------
# 4. boundary Green sums


def test_criterion_04_boundary_green_sums(report):
    worst = []
    ok = True
    for l1, l2 in itertools.product((4, 8), (16, 32)):
        starts, vals = boundary_greens_sums((0, 0), l1, l2)
        bound = 2 * (l2 - l1)
        ok &= bool(vals.max() <= bound) and len(starts) == 4 * l1
        worst.append(f"({l1},{l2}): {vals.max():.3f} <= {bound}")
    report(4, ok, "; ".join(worst))


# ---------------------------------------------------------------------------
# 5. log-correlation constant


def test_criterion_05_log_correlation(report):
    c = {N: log_correlation_report(N).c1_hat for N in (64, 128, 256)}
    spread = max(c.values()) / min(c.values())
    ok = spread <= 1.2
    report(5, ok, "C1_hat " + ", ".join(f"N={N}: {v:.4f}" for N, v in c.items()) + f"; max/min = {spread:.3f}")


# ---------------------------------------------------------------------------
# 6. contour oracle


def test_criterion_06_contour_oracle(report):
    t0 = time.perf_counter()
    ann = Annulus.square((4, 4), 5, 9)
    region = ann.region_mask()
    rng = np.random.default_rng(606)
    budget = 20_000
    compared = bad = replaced = partial_bad = none = 0
    k = 0
    while compared < 1000:
        g = planted_annulus_mask(rng, 0.3) if k % 2 == 0 else (rng.random((9, 9)) < 0.8) & region
        k += 1
        m = mask_from_array(g)
        c = outermost_open_contour(m, ann)
        cycles = list(itertools.islice(surrounding_cycles(g, (4, 4)), budget + 1))
        if len(cycles) > budget:
            # too many circuits to enumerate: check the contour against the first ones only
            replaced += 1
            hull = {tuple(p) for p in np.argwhere(c.enclosed | c.vertex_mask()).tolist()}
            area = cycle_area2([tuple(p) for p in c.path[:-1]])
            partial_bad += any(not set(cyc) <= hull or cycle_area2(cyc) > area for cyc in cycles)
            continue
        compared += 1
        best = brute_outermost(g, (4, 4), cycles)
        none += best is None
        agree = (c is None) == (best is None) and open_circuit_exists(m, ann) == bool(cycles)
        if agree and c is not None:
            agree = c.vertices() == set(best)
        bad += not agree
    secs = time.perf_counter() - t0
    ok = bad == 0 and partial_bad == 0 and secs < 60
    report(6, ok, f"{bad} disagreements on {compared} fully enumerated masks ({none} without a circuit); "
                  f"{replaced} further draws had more than {budget} circuits and were replaced "
                  f"({partial_bad} fail the partial check); {secs:.1f} s")


# ---------------------------------------------------------------------------
# 7. conditional-mean invariant


def test_criterion_07_conditional_mean(report):
    contours = trials = 0
    viol = 0
    worst = 0.0
    for cell, alpha in enumerate((-0.5, 0.0, 0.3, 1.0)):
        cfg = config_from_dict({"kind": "contour", "annulus": "square", "w": 10, "outer_side": 61,
                                "lambda": [1.0, 1.5, 2.0, 3.0, "inf"], "alpha": alpha,
                                "trials": 50, "seed": 700 + cell, "workers": 4})
        r = run_contour(cfg)
        for c in r.cells:
            trials += cfg.trials
            contours += c["contours"]
            viol += c["conditional_mean_violations"]
            if c["max_abs_conditional_mean"] is not None and math.isfinite(c["lambda"]):
                worst = max(worst, c["max_abs_conditional_mean"] / c["lambda"])
    ok = viol == 0 and trials == 1000 and contours > 0
    report(7, ok, f"{viol} violations in {trials} trials, {contours} with a contour; "
                  f"largest |mean| / lambda = {worst:.3f}")


# ---------------------------------------------------------------------------
# 8. tree machinery


def _in_scale_class(v, K, j) -> bool:
    if j == 0:
        return len(v) == 1
    span = float(np.hypot(*(v[-1] - v[0])))
    reach = float(np.max(np.hypot(*(v - v[0]).T)))
    return scale_by_loop(span, K) == j and reach <= span + 1e-9


def _tiles(v, r):
    return {(int(x) // r, int(y) // r) for x, y in v}


def test_criterion_08_tree_machinery(report):
    spec = EnsembleSpec(0.5, 0.1, 4, 2048)
    bound = 2 * Fraction(spec.delta) * spec.m
    problems = []
    worst = Fraction(0)
    for s in range(100):
        P = loop_erase(drifted_walk(trial_rng(8, 0, s), (-600, 0), 1600))
        if not ensemble_membership(P, spec):
            problems.append(f"path {s} outside the ensemble")
            continue
        t = build_ensemble_tree(P, spec)
        v = P.vertices
        for lvl, total in enumerate(t.level_sums()):
            if abs(float(total) - 1) > 1e-12:
                problems.append(f"path {s} level {lvl} flow {float(total)}")
        for n in t.nodes():
            kids = n.children
            if not kids:
                continue
            need = spec.d0 if n is t.root else spec.K
            if len(kids) < need:
                problems.append(f"path {s}: (a) {len(kids)} children")
            visits = Counter()
            for c in kids:
                visits.update(_tiles(v[c.start:c.end + 1], spec.K ** c.scale))
                if not _in_scale_class(v[c.start:c.end + 1], spec.K, c.scale):
                    problems.append(f"path {s}: (c) child not in SL_{c.scale}")
            if max(visits.values()) > 12:
                problems.append(f"path {s}: (b) tile visited {max(visits.values())} times")
            if any(a.end > b.start for a, b in zip(kids, kids[1:])):
                problems.append(f"path {s}: children overlap")
        u = untamed_flow(t)
        worst = max(worst, u)
        if u > bound:
            problems.append(f"path {s}: untamed flow {float(u)} > {float(bound)}")
    ok = not problems
    report(8, ok, f"100 ensemble paths (K=4, N=2048, m={spec.m}, d0={spec.d0}); "
                  f"{len(problems)} problems; max untamed flow {float(worst):.4f} <= 2 delta m = {float(bound)}"
                  + (f"; first: {problems[0]}" if problems else ""))


# ---------------------------------------------------------------------------
# 9. chemical distance


def test_criterion_09_chemical_distance(report):
    cfg = config_from_dict({"kind": "chemdist", "N": [16, 32, 64, 128], "lambda": ["inf"], "trials": 4})
    r = run_chemdist(cfg)
    dists = {x.N: x.estimate for x in r.records if x.kind == "chemdist_two_sided"}
    exact = all(d == N - 1 for N, d in dists.items())
    slope = [x.estimate for x in r.records if x.kind == "chemdist_fit_two_sided"][0]
    rng = np.random.default_rng(909)
    mism = 0
    for _ in range(50):
        g = rng.random((8, 8)) < 0.6
        fw = floyd_warshall(g)
        m = mask_from_array(g)
        for a in range(64):
            for b in range(64):
                got = chemical_distance(m, [divmod(a, 8)], [divmod(b, 8)])
                want = None if math.isinf(fw[a, b]) else int(fw[a, b])
                mism += got != want
    ok = exact and abs(slope - 1) <= 1e-6 and mism == 0
    report(9, ok, f"lambda=inf distances {dists}; slope {slope:.9f}; "
                  f"{mism} BFS mismatches over 50 masks x 4096 pairs")


# ---------------------------------------------------------------------------
# 10. schedule exactness


def test_criterion_10_schedule(report):
    cfg = ScheduleConfig()
    K = 2 ** 32
    R = 64
    c_ok = all(c == Fraction(K, 512) ** r for r, c in enumerate(c_schedule(K, R)))
    th = k_thresholds(cfg, 1.0, R)
    tele = max(abs(th.log_K[r] - log_K_r(cfg, 1.0, r)) / th.log_K[r] for r in range(R + 1))
    eps = epsilon_schedule(cfg, R)
    shift = max(abs(th.log_K[r] - log_K0(cfg, 1 + MP.fsum(eps[1:r + 1]))) / th.log_K[r] for r in range(R + 1))
    q = MP.sqrt(MP.mpf(1) / 512)
    ratio = max(abs(eps[r + 1] / eps[r] - q) for r in range(2, R))
    delta, Delta = delta_schedule(cfg, K, R)
    mono = all(a <= b for a, b in zip(delta, delta[1:])) and all(d > 0 for d in Delta)
    Kmin = minimal_passing_K(cfg, 1 / 16)
    below = summability_check(cfg, Kmin // 2, 1 / 16).passed
    upward = all(summability_check(cfg, 2 ** k, 1 / 16).passed for k in range(Kmin.bit_length() - 1, 513))
    tol = MP.mpf("1e-45")
    ok = c_ok and tele <= tol and shift <= tol and ratio <= tol and mono and not below and upward
    report(10, ok, f"c_r exact {c_ok}; telescoping rel err {MP.nstr(max(tele, shift), 3)}; "
                   f"eps ratio err {MP.nstr(ratio, 3)}; delta monotone {mono}; "
                   f"minimal K = 2^{Kmin.bit_length() - 1}, upward closed to 2^512 {upward}")


# ---------------------------------------------------------------------------
# 11. trivial bound


def test_criterion_11_trivial_bound(report):
    t0 = time.perf_counter()
    cfg = config_from_dict({"kind": "crossing", "N": [32, 64], "lambda": [0.3], "kappa": 0.5,
                            "trials": 2000, "seed": 11, "workers": 8})
    r = run_crossing(cfg)
    secs = time.perf_counter() - t0
    parts, ok = [], secs < 300
    for x in r.records:
        b = trivial_decay_bound(0.3, 0.5, x.N)
        good = x.ci_hi < b
        ok &= good
        parts.append(f"N={x.N}: p_hat={x.estimate:.4g}, upper CI {x.ci_hi:.3g} "
                     f"{'<' if good else '>='} bound {b:.3g}")
    report(11, ok, "; ".join(parts) + f"; {secs:.1f} s")


# ---------------------------------------------------------------------------
# 12. determinism


def test_criterion_12_determinism(report, tmp_path):
    cfg = tmp_path / "chem.json"
    cfg.write_text(json.dumps({"kind": "chemdist", "N": [8, 16, 32], "lambda": [1.0, 2.0, "inf"],
                               "trials": 16, "seed": 1212}))
    codes, blobs = [], []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        codes.append(main(["experiment", "chemdist", "--config", str(cfg), "--out", str(out),
                           "--workers", str(workers)]))
        blobs.append((out / "results.csv").read_bytes())
    ok = codes == [0, 0] and blobs[0] == blobs[1]
    report(12, ok, f"exit codes {codes}; results.csv identical at 1 and 8 workers: {blobs[0] == blobs[1]} "
                   f"({len(blobs[0])} bytes)")

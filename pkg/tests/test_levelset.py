from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgfflab.dgff import sample_spectral
from dgfflab.geometry import Annulus, GeometryError, LatticeBox, make_parallelogram
from dgfflab.levelset import (
    chemical_distance, cluster_labels, crossing_exists, mask_from_array, one_sided_mask, open_circuit_exists,
    open_mask, outermost_open_contour, side_to_side_distance,
)

from oracles import (
    all_simple_paths_cross, brute_outermost, cycle_area2, flood_enclosed, flood_labels, floyd_warshall,
    planted_annulus_mask, surrounding_cycles,
)

ANNULUS = Annulus.square((4, 4), 5, 9)
CYCLE_BUDGET = 20_000

grids = st.integers(2, 7).flatmap(
    lambda w: st.integers(2, 7).flatmap(
        lambda h: st.lists(st.booleans(), min_size=w * h, max_size=w * h).map(
            lambda v: np.array(v, dtype=bool).reshape(w, h))))


# ---------------------------------------------------------------------------
# masks


def test_zero_threshold_keeps_only_zero_values():
    s = sample_spectral(10, 8, 1)
    m = open_mask(s, 0.0)
    assert m.mask.sum() == 2 * (10 + 8) - 4
    assert not m.mask[1:-1, 1:-1].any()


def test_infinite_threshold_opens_everything():
    s = sample_spectral(10, 8, 1)
    assert open_mask(s, math.inf).mask.all()


def test_shift_cancels_the_field():
    s = sample_spectral(10, 8, 1, corner=(3, 3))
    v = (7, 6)
    m = open_mask(s, 2.0, alpha=-s(v))
    assert m(v) and m.alpha == -s(v)


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        open_mask(sample_spectral(5, 5, 0), -1.0)


def test_one_sided_mask():
    s = sample_spectral(12, 12, 4)
    m = one_sided_mask(s, 0.5)
    assert np.array_equal(m.mask, s.values >= 0.5) and m.kind == "one_sided"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0, 3), st.floats(0, 3), st.floats(-1, 1))
def test_masks_are_monotone_in_threshold(seed, a, b, alpha):
    lo, hi = min(a, b), max(a, b)
    s = sample_spectral(16, 16, seed)
    m1, m2 = open_mask(s, lo, alpha), open_mask(s, hi, alpha)
    assert not (m1.mask & ~m2.mask).any()
    d1, d2 = side_to_side_distance(m1), side_to_side_distance(m2)
    if d1 is not None:
        assert d2 is not None and d2 <= d1
    box = s.domain.box
    assert crossing_exists(m1, box) <= crossing_exists(m2, box)


# ---------------------------------------------------------------------------
# crossings


def test_crossing_trivial_cases():
    box = LatticeBox((0, 0), 20, 5)
    assert crossing_exists(mask_from_array(np.ones((20, 5))), box)
    assert not crossing_exists(mask_from_array(np.zeros((20, 5))), box)


def test_closed_column_blocks_crossing():
    g = np.ones((20, 5), dtype=bool)
    g[9, :] = False
    assert not crossing_exists(mask_from_array(g), LatticeBox((0, 0), 20, 5))
    small = np.ones((6, 3), dtype=bool)
    small[2, :] = False
    assert not all_simple_paths_cross(small) and all_simple_paths_cross(np.ones((6, 3), dtype=bool))


def test_crossing_matches_exhaustive_search():
    rng = np.random.default_rng(8)
    for _ in range(300):
        w, h = rng.integers(2, 9), rng.integers(2, 6)
        g = rng.random((w, h)) < 0.6
        assert crossing_exists(mask_from_array(g), LatticeBox((0, 0), int(w), int(h))) == all_simple_paths_cross(g)


def test_parallelogram_crossing():
    D = make_parallelogram(0, 0, 160, 20, 10)
    box = D.bounding_box()
    assert crossing_exists(mask_from_array(np.ones(box.shape), box.corner), D)
    g = np.ones(box.shape, dtype=bool)
    g[80 - box.xmin, :] = False
    assert not crossing_exists(mask_from_array(g, box.corner), D)
    # the region outside D does not help
    h = np.zeros(box.shape, dtype=bool)
    outside = np.ones(box.shape, dtype=bool)
    pts = D.lattice_points()
    outside[pts[:, 0] - box.xmin, pts[:, 1] - box.ymin] = False
    h[outside] = True
    assert not crossing_exists(mask_from_array(h, box.corner), D)


def test_crossing_needs_mask_covering_region():
    with pytest.raises(GeometryError):
        crossing_exists(mask_from_array(np.ones((4, 4))), LatticeBox((0, 0), 6, 6))


# ---------------------------------------------------------------------------
# circuits


def test_all_open_annulus_has_a_circuit():
    m = mask_from_array(np.ones((9, 9)))
    assert open_circuit_exists(m, ANNULUS)
    c = outermost_open_contour(m, ANNULUS)
    assert c.length == 32 and c.vertices() == {(x, y) for x in range(9) for y in range(9)
                                              if x in (0, 8) or y in (0, 8)}


def test_radial_cut_kills_circuits():
    g = np.ones((9, 9), dtype=bool)
    g[6:, 4] = False
    m = mask_from_array(g)
    assert not open_circuit_exists(m, ANNULUS)
    assert outermost_open_contour(m, ANNULUS) is None


def test_single_circuit_is_returned():
    g = np.zeros((9, 9), dtype=bool)
    g[1:8, 1] = g[1:8, 7] = g[1, 1:8] = g[7, 1:8] = True
    c = outermost_open_contour(mask_from_array(g), ANNULUS)
    assert c.vertices() == {tuple(p) for p in np.argwhere(g).tolist()}
    assert c.enclosed.sum() == 25


def test_nested_circuits_return_the_outer_one():
    g = np.zeros((9, 9), dtype=bool)
    g[1:8, 1] = g[1:8, 7] = g[1, 1:8] = g[7, 1:8] = True
    g[:, 0] = g[:, 8] = g[0, :] = g[8, :] = True
    c = outermost_open_contour(mask_from_array(g), ANNULUS)
    assert c.length == 32 and (0, 0) in c.vertices()


def test_contour_path_is_a_simple_cycle():
    g = planted_annulus_mask(np.random.default_rng(3), 0.5)
    c = outermost_open_contour(mask_from_array(g), ANNULUS)
    p = c.path
    assert tuple(p[0]) == tuple(p[-1]) and len({tuple(q) for q in p[:-1]}) == c.length
    assert (np.abs(np.diff(p, axis=0)).sum(axis=1) == 1).all()
    cyc = [tuple(q) for q in p[:-1]]
    assert np.array_equal(c.enclosed, flood_enclosed(cyc, (9, 9)))


def test_annulus_must_fit_in_the_mask():
    with pytest.raises(GeometryError):
        open_circuit_exists(mask_from_array(np.ones((7, 7))), ANNULUS)


def _random_annulus_masks(rng, count):
    region = ANNULUS.region_mask()
    for k in range(count):
        yield planted_annulus_mask(rng, 0.3) if k % 2 == 0 else (rng.random((9, 9)) < 0.8) & region


def test_contour_matches_exhaustive_oracle():
    checked = skipped = 0
    for g in _random_annulus_masks(np.random.default_rng(0), 150):
        cycles = list(itertools.islice(surrounding_cycles(g, (4, 4)), CYCLE_BUDGET + 1))
        if len(cycles) > CYCLE_BUDGET:
            skipped += 1
            continue
        m = mask_from_array(g)
        c = outermost_open_contour(m, ANNULUS)
        assert open_circuit_exists(m, ANNULUS) == bool(cycles)
        best = brute_outermost(g, (4, 4), cycles)
        assert (c is None) == (best is None)
        if c is not None:
            assert c.vertices() == set(best)
        checked += 1
    assert skipped <= 0.05 * 150


def test_no_circuit_encloses_the_outermost():
    rng = np.random.default_rng(12)
    for _ in range(40):
        g = planted_annulus_mask(rng, 0.3)
        c = outermost_open_contour(mask_from_array(g), ANNULUS)
        # the contour with its enclosed set is simply connected, so a cycle
        # with every vertex in it encloses nothing outside it
        hull = {tuple(p) for p in np.argwhere(c.enclosed | c.vertex_mask()).tolist()}
        area = cycle_area2([tuple(p) for p in c.path[:-1]])
        for cyc in itertools.islice(surrounding_cycles(g, (4, 4)), CYCLE_BUDGET):
            assert set(cyc) <= hull and cycle_area2(cyc) <= area


def test_contour_ignores_the_enclosed_region():
    rng = np.random.default_rng(21)
    for _ in range(50):
        g = planted_annulus_mask(rng, 0.5)
        c = outermost_open_contour(mask_from_array(g), ANNULUS)
        h = g.copy()
        h[c.enclosed] = rng.random(int(c.enclosed.sum())) < 0.5
        c2 = outermost_open_contour(mask_from_array(h), ANNULUS)
        assert np.array_equal(c.path, c2.path)


def test_contour_on_a_sampled_field():
    s = sample_spectral(41, 41, 3, corner=(-20, -20))
    ann = Annulus.square((0, 0), 21, 41)
    m = open_mask(s, 5.0)
    c = outermost_open_contour(m, ann)
    assert open_circuit_exists(m, ann) == (c is not None)
    if c is not None:
        assert all(m(v) for v in c.vertices())


# ---------------------------------------------------------------------------
# distances and clusters


def test_chemical_distance_examples():
    m = mask_from_array(np.ones((5, 5)))
    assert chemical_distance(m, [(0, 0)], [(3, 2)]) == 5
    assert chemical_distance(m, [(2, 2)], [(2, 2)]) == 0
    g = np.ones((5, 5), dtype=bool)
    g[2, 2] = False
    assert chemical_distance(mask_from_array(g), [(2, 2)], [(2, 2)]) is None
    g[2, :] = False
    assert chemical_distance(mask_from_array(g), [(0, 0)], [(4, 4)]) is None


def test_chemical_distance_matches_floyd_warshall():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = rng.random((8, 8)) < 0.65
        d = floyd_warshall(g)
        m = mask_from_array(g)
        for a in range(0, 64, 5):
            for b in range(1, 64, 7):
                got = chemical_distance(m, [divmod(a, 8)], [divmod(b, 8)])
                want = d[a, b]
                assert (got is None) == math.isinf(want)
                if got is not None:
                    assert got == want


def test_side_to_side_distance_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = rng.random((8, 6)) < 0.7
        d = floyd_warshall(g)
        want = min(d[i * 6 + j, 7 * 6 + k] for i in (0,) for j in range(6) for k in range(6))
        got = side_to_side_distance(mask_from_array(g))
        assert (got is None) == math.isinf(want) and (got is None or got == want)


@settings(max_examples=60, deadline=None)
@given(grids, st.data())
def test_chemical_distance_dominates_sup_distance(g, data):
    w, h = g.shape
    a = (data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, h - 1)))
    b = (data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, h - 1)))
    d = chemical_distance(mask_from_array(g), [a], [b])
    if d is not None:
        assert d >= max(abs(a[0] - b[0]), abs(a[1] - b[1]))
        assert d >= abs(a[0] - b[0]) + abs(a[1] - b[1])


def test_cluster_label_examples():
    assert (cluster_labels(np.ones((6, 6), dtype=bool)) == 0).all()
    cb = (np.add.outer(np.arange(6), np.arange(6)) % 2) == 0
    lab = cluster_labels(cb)
    assert (lab[cb] == np.flatnonzero(cb.ravel())).all() and (lab[~cb] == -1).all()


@settings(max_examples=80, deadline=None)
@given(grids)
def test_cluster_labels_match_flood_fill(g):
    assert np.array_equal(cluster_labels(g), flood_labels(g))
    assert np.array_equal(cluster_labels(mask_from_array(g)), flood_labels(g))

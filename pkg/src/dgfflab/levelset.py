"""Open masks, crossings, open circuits and chemical distances.

Open paths and circuits use 4-adjacency.  Their dual objects, the closed
sets that block them, use 8-adjacency: an annulus has an open circuit
around its hole iff no 8-connected chain of blocked vertices joins the hole
to the outside.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .dgff import FieldSample
from .geometry import Annulus, GeometryError, LatticeBox, Parallelogram, RotatedParallelogram

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = np.ones((3, 3), dtype=bool)

# E, N, W, S: the fixed neighbour order used throughout
STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True, eq=False)
class OpenMask:
    """Per-vertex openness on the array of ``box``."""

    box: LatticeBox
    mask: np.ndarray = field(repr=False)
    lam: float = float("inf")
    alpha: float = 0.0
    kind: str = "two_sided"

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.box.shape:
            raise ValueError("mask shape does not match its box")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    def __call__(self, p) -> bool:
        return p in self.box and bool(self.mask[self.box.local(p)])

    def at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        i = pts[:, 0] - self.box.xmin
        j = pts[:, 1] - self.box.ymin
        if (i < 0).any() or (j < 0).any() or (i >= self.box.width).any() or (j >= self.box.height).any():
            raise GeometryError("points leave the mask's domain")
        return self.mask[i, j]


def open_mask(sample: FieldSample, lam: float, alpha: float = 0.0) -> OpenMask:
    """Vertices with ``|eta + alpha| <= lam``."""
    if not lam >= 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    m = np.abs(sample.values + alpha) <= lam
    return OpenMask(sample.domain.box, m, float(lam), float(alpha), "two_sided")


def one_sided_mask(sample: FieldSample, h: float) -> OpenMask:
    """Vertices with ``eta >= h`` (the one-sided comparison baseline)."""
    return OpenMask(sample.domain.box, sample.values >= h, float(h), 0.0, "one_sided")


def mask_from_array(arr, corner=(0, 0)) -> OpenMask:
    arr = np.asarray(arr, dtype=bool)
    return OpenMask(LatticeBox(tuple(corner), arr.shape[0], arr.shape[1]), arr)


# ---------------------------------------------------------------------------
# crossings


def _region_and_sides(D):
    if isinstance(D, LatticeBox):
        pts = D.vertices()
        left = pts[pts[:, 0] == D.xmin]
        right = pts[pts[:, 0] == D.xmax]
        return pts, left, right
    if isinstance(D, (Parallelogram, RotatedParallelogram)):
        left, right = D.sides()
        return D.lattice_points(), left, right
    raise TypeError(f"unsupported crossing region {type(D).__name__}")


def crossing_exists(mask: OpenMask, D) -> bool:
    """Is there an open 4-path inside ``D`` joining its two designated sides?

    For a parallelogram the sides are its leftmost and rightmost lattice
    columns; a rotated copy uses the rotated sides.  A :class:`LatticeBox`
    is crossed from its left column to its right column.
    """
    pts, left, right = _region_and_sides(D)
    op = mask.at(pts)
    x0, y0 = pts.min(axis=0)
    shape = tuple(pts.max(axis=0) - (x0, y0) + 1)
    grid = np.zeros(shape, dtype=bool)
    grid[pts[op, 0] - x0, pts[op, 1] - y0] = True
    labels, _ = ndimage.label(grid, structure=_FOUR)
    a = labels[left[:, 0] - x0, left[:, 1] - y0]
    b = labels[right[:, 0] - x0, right[:, 1] - y0]
    common = np.intersect1d(a[a > 0], b[b > 0])
    return common.size > 0


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True, eq=False)
class Contour:
    """A simple open circuit; ``path`` repeats its first vertex at the end."""

    path: np.ndarray = field(repr=False)
    box: LatticeBox
    enclosed: np.ndarray = field(repr=False)  # strictly enclosed vertices, on ``box``

    @property
    def length(self) -> int:
        return len(self.path) - 1

    def vertex_mask(self) -> np.ndarray:
        m = np.zeros(self.box.shape, dtype=bool)
        m[self.path[:, 0] - self.box.xmin, self.path[:, 1] - self.box.ymin] = True
        return m

    def vertices(self) -> set:
        return {(int(x), int(y)) for x, y in self.path[:-1]}


def enclosed_by(cycle_mask: np.ndarray) -> np.ndarray:
    """Vertices cut off from the array border by ``cycle_mask`` (4-flood from outside)."""
    free = np.pad(~cycle_mask, 1, constant_values=True)
    labels, _ = ndimage.label(free, structure=_FOUR)
    outside = labels == labels[0, 0]
    return (~outside[1:-1, 1:-1]) & ~cycle_mask


def _annulus_grid(mask: OpenMask, annulus: Annulus) -> tuple[np.ndarray, np.ndarray]:
    """Open-and-in-region grid and the inner-box mask, both on the outer box."""
    outer = annulus.outer
    if not mask.box.contains_box(outer):
        raise GeometryError("annulus leaves the mask's domain")
    region = annulus.region_mask()
    good = region & mask.mask[mask.box.slices_of(outer)]
    return good, annulus.inner_mask()


def _exterior(good: np.ndarray) -> np.ndarray:
    """8-connected component of the blocked vertices that meets the border (on the padded grid)."""
    blocked = np.pad(~good, 1, constant_values=True)
    labels, _ = ndimage.label(blocked, structure=_EIGHT)
    return labels == labels[0, 0]


def open_circuit_exists(mask: OpenMask, annulus: Annulus) -> bool:
    good, inner = _annulus_grid(mask, annulus)
    ext = _exterior(good)[1:-1, 1:-1]
    return not (ext & inner).any()


def _trace_outer_face(nodes: set, start) -> list | None:
    """Walk the outer face of a 2-connected lattice subgraph, keeping it on the right.

    ``start`` is the lowest, then leftmost, node; its neighbours are E and N.
    Returns the closed vertex walk or ``None`` if the walk is not simple.
    """
    path = [start]
    cur, d = start, 0  # heading east along the bottom
    seen = {start}
    limit = 4 * len(nodes) + 4
    for _ in range(limit):
        for turn in (3, 0, 1, 2):  # right, straight, left, back
            nd = (d + turn) % 4
            nxt = (cur[0] + STEPS[nd][0], cur[1] + STEPS[nd][1])
            if nxt in nodes:
                break
        else:  # pragma: no cover - isolated node
            return None
        cur, d = nxt, nd
        path.append(cur)
        if cur == start:
            return path
        if cur in seen:
            return None
        seen.add(cur)
    return None  # pragma: no cover


def outermost_open_contour(mask: OpenMask, annulus: Annulus) -> Contour | None:
    """The open circuit in the annulus whose enclosed set is largest, if any.

    The blocked 8-cluster of the outside is explored first; if it reaches the
    hole there is no circuit.  Otherwise every simple cycle of the open
    graph lives in one 2-connected block, and the largest cycle of a block is
    its outer face.  Among blocks whose outer face surrounds the hole the one
    with the largest enclosed set is returned; its enclosed set contains every
    other surrounding circuit's.
    """
    good, inner = _annulus_grid(mask, annulus)
    ext = _exterior(good)[1:-1, 1:-1]
    if (ext & inner).any():
        return None
    outer = annulus.outer
    # open vertices not in the exterior, i.e. inside the hull
    hull = good & ~ext
    g = nx.Graph()
    idx = np.argwhere(hull)
    g.add_nodes_from(map(tuple, idx))
    hi, hj = np.nonzero(hull[:-1, :] & hull[1:, :])
    g.add_edges_from(zip(zip(hi, hj), zip(hi + 1, hj)))
    vi, vj = np.nonzero(hull[:, :-1] & hull[:, 1:])
    g.add_edges_from(zip(zip(vi, vj), zip(vi, vj + 1)))
    ib = np.argwhere(inner)
    ilo, ihi = ib.min(axis=0), ib.max(axis=0)
    best = None
    for comp in nx.biconnected_components(g):
        if len(comp) < 4:
            continue
        arr = np.array([(int(a), int(b)) for a, b in comp])
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        if (lo >= ilo).any() or (hi <= ihi).any():
            continue  # cannot surround the hole
        nodes = {(int(a), int(b)) for a, b in arr}
        start = min(nodes, key=lambda p: (p[1], p[0]))
        walk = _trace_outer_face(nodes, start)
        if walk is None:
            continue
        cyc = np.zeros(good.shape, dtype=bool)
        w = np.array(walk)
        cyc[w[:, 0], w[:, 1]] = True
        enc = enclosed_by(cyc)
        if not enc[inner].all():
            continue
        if best is None or enc.sum() > best[1].sum():
            best = (w, enc)
    if best is None:  # pragma: no cover - the dual argument guarantees a circuit
        raise RuntimeError("open circuit exists but none was traced")
    w, enc = best
    path = w + np.array(outer.corner)
    return Contour(path, outer, enc)


# ---------------------------------------------------------------------------
# distances and clusters


def _grid_graph(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    n = idx.size
    pos = -np.ones(mask.size, dtype=np.int64)
    pos[idx] = np.arange(n)
    pos = pos.reshape(mask.shape)
    r = [pos[:-1, :][mask[:-1, :] & mask[1:, :]], pos[:, :-1][mask[:, :-1] & mask[:, 1:]]]
    c = [pos[1:, :][mask[:-1, :] & mask[1:, :]], pos[:, 1:][mask[:, :-1] & mask[:, 1:]]]
    rows = np.concatenate(r)
    cols = np.concatenate(c)
    A = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    return A, pos


def chemical_distance(mask: OpenMask, sources, targets) -> int | None:
    """Fewest edges on an open 4-path from a source to a target (``None`` if cut off).

    Closed endpoints are never joined; a vertex that is both source and
    target is at distance zero if open.
    """
    src = np.asarray(sources, dtype=np.int64).reshape(-1, 2)
    tgt = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    if src.size == 0 or tgt.size == 0:
        raise ValueError("source and target sets must be nonempty")
    so, to = mask.at(src), mask.at(tgt)
    src, tgt = src[so], tgt[to]
    if src.size == 0 or tgt.size == 0:
        return None
    A, pos = _grid_graph(mask.mask)
    si = pos[src[:, 0] - mask.box.xmin, src[:, 1] - mask.box.ymin]
    ti = pos[tgt[:, 0] - mask.box.xmin, tgt[:, 1] - mask.box.ymin]
    dist = dijkstra(A, directed=False, indices=np.unique(si), unweighted=True, min_only=True)
    best = float(np.min(dist[ti]))
    return None if np.isinf(best) else int(best)


def side_to_side_distance(mask: OpenMask) -> int | None:
    """Chemical distance between the left and right columns of the mask's box."""
    b = mask.box
    ys = np.arange(b.ymin, b.ymax + 1)
    left = np.stack([np.full_like(ys, b.xmin), ys], axis=1)
    right = np.stack([np.full_like(ys, b.xmax), ys], axis=1)
    return chemical_distance(mask, left, right)


class UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller index as root so labels are canonical
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def cluster_labels(mask) -> np.ndarray:
    """Label open 4-clusters by the flat (C order) index of their smallest vertex; closed gets -1."""
    m = mask.mask if isinstance(mask, OpenMask) else np.asarray(mask, dtype=bool)
    W, H = m.shape
    uf = UnionFind(m.size)
    flat = np.arange(m.size).reshape(m.shape)
    for a, b in ((flat[:-1, :][m[:-1, :] & m[1:, :]], flat[1:, :][m[:-1, :] & m[1:, :]]),
                 (flat[:, :-1][m[:, :-1] & m[:, 1:]], flat[:, 1:][m[:, :-1] & m[:, 1:]])):
        for u, v in zip(a.tolist(), b.tolist()):
            uf.union(u, v)
    out = np.array([uf.find(i) for i in range(m.size)]).reshape(m.shape)
    out[~m] = -1
    return out

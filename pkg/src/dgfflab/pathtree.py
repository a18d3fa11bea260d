"""Lattice paths, scale classes, tameness and multi-scale path trees.

A path ``P`` is in scale ``K^j`` (class ``SL_j``, ``j >= 1``) when its endpoint
span ``||P||`` lies in ``[K^j, (1 + 1/K) K^j]`` and ``P`` stays in the closed
ball of radius ``||P||`` about its first vertex; single vertices form
``SL_0``.  A scaled path is tame when it stays within ``4 K^(j-1)`` of the
focal ellipse ``E(P)`` through its endpoints.

Trees split each node into at least ``K`` children one scale down, with the
uniform flow ``theta`` assigned top-down.  For a threshold ``l`` every start
vertex ``s`` has a candidate child running to the first vertex at distance at
least ``l`` from ``s``; among admissible candidates the children are chosen by
earliest-end interval scheduling, so their edge ranges are disjoint and their
number is maximal.  Thresholds are searched with backtracking until every
child decomposes in turn.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dgff import FieldSample
from .geometry import BoxId, box_of, box_vn, end_scale, is_power_of_two


class DecompositionError(RuntimeError):
    """No admissible child extraction was found."""


MAX_VISITS = 12


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class LatticePath:
    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.int64).reshape(-1, 2)
        if v.shape[0] == 0:
            raise ValueError("a path needs at least one vertex")
        steps = np.abs(np.diff(v, axis=0)).sum(axis=1)
        if (steps != 1).any():
            k = int(np.flatnonzero(steps != 1)[0])
            raise ValueError(f"vertices {k} and {k + 1} are not lattice neighbours")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def start(self) -> tuple[int, int]:
        return (int(self.vertices[0, 0]), int(self.vertices[0, 1]))

    @property
    def end(self) -> tuple[int, int]:
        return (int(self.vertices[-1, 0]), int(self.vertices[-1, 1]))

    @property
    def span2(self) -> int:
        d = self.vertices[-1] - self.vertices[0]
        return int(d[0]) ** 2 + int(d[1]) ** 2

    @property
    def span(self) -> float:
        return math.sqrt(self.span2)

    def __len__(self) -> int:
        return int(self.vertices.shape[0])

    def sub(self, i: int, j: int) -> "LatticePath":
        """Vertices ``i..j`` inclusive."""
        return LatticePath(self.vertices[i:j + 1])

    def __repr__(self):
        return f"LatticePath({self.start}->{self.end}, |P|={len(self)})"


def path_from_steps(start, steps: str) -> LatticePath:
    """Build a path from a string over ``ENWS``."""
    move = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}
    pts = [tuple(start)]
    for ch in steps:
        dx, dy = move[ch]
        pts.append((pts[-1][0] + dx, pts[-1][1] + dy))
    return LatticePath(np.array(pts))


def straight_path(start, length: int, direction=(1, 0)) -> LatticePath:
    k = np.arange(length + 1)[:, None]
    return LatticePath(np.asarray(start) + k * np.asarray(direction))


def write_path(path: LatticePath) -> str:
    return "".join(f"{x},{y}\n" for x, y in path.vertices)


def read_path(text: str) -> LatticePath:
    pts = [tuple(int(t) for t in line.split(",")) for line in text.splitlines() if line.strip()]
    return LatticePath(np.array(pts))


# ---------------------------------------------------------------------------
# scale classes and tameness


def _check_K(K: int) -> None:
    if not is_power_of_two(K) or K < 2:
        raise ValueError(f"K must be a power of two >= 2, got {K}")


def _in_window(span2: int, j: int, K: int) -> bool:
    lo = K ** j
    hi = K ** j + K ** (j - 1)  # (1 + 1/K) K^j
    return lo * lo <= span2 <= hi * hi


def scale_class(P: LatticePath, K: int) -> int | None:
    _check_K(K)
    if len(P) == 1:
        return 0
    s2 = P.span2
    if s2 == 0:
        return None
    j = 1
    while K ** (2 * j) <= s2:
        if _in_window(s2, j, K):
            d = P.vertices - P.vertices[0]
            if int(np.max(d[:, 0] ** 2 + d[:, 1] ** 2)) <= s2:
                return j
            return None
        j += 1
    return None


def _ellipse_distance_q1(e0: float, e1: float, y0: float, y1: float) -> float:
    """Distance from ``(y0, y1)``, both >= 0, to the ellipse ``x^2/e0^2 + y^2/e1^2 = 1`` (``e0 >= e1``)."""
    if y1 > 0:
        if y0 > 0:
            z0, z1 = y0 / e0, y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g == 0:
                return 0.0
            r0 = (e0 / e1) ** 2
            n0 = r0 * z0
            s0, s1 = z1 - 1.0, (0.0 if g < 0 else math.hypot(n0, z1) - 1.0)
            s = 0.0
            for _ in range(2000):
                s = 0.5 * (s0 + s1)
                if s == s0 or s == s1:
                    break
                r0s, r1s = n0 / (s + r0), z1 / (s + 1.0)
                gs = r0s * r0s + r1s * r1s - 1.0
                if gs > 0:
                    s0 = s
                elif gs < 0:
                    s1 = s
                else:
                    break
            x0, x1 = r0 * y0 / (s + r0), y1 / (s + 1.0)
            return math.hypot(x0 - y0, x1 - y1)
        return abs(y1 - e1)
    numer0, denom0 = e0 * y0, e0 * e0 - e1 * e1
    if numer0 < denom0:
        xde0 = numer0 / denom0
        x0, x1 = e0 * xde0, e1 * math.sqrt(max(0.0, 1.0 - xde0 * xde0))
        return math.hypot(x0 - y0, x1)
    return abs(y0 - e0)


def ellipse_distance(p, f1, f2, major_sum: float) -> float:
    """Distance from ``p`` to the filled ellipse ``{z : |z-f1| + |z-f2| <= major_sum}``."""
    p, f1, f2 = (np.asarray(v, dtype=float) for v in (p, f1, f2))
    d1, d2 = np.linalg.norm(p - f1), np.linalg.norm(p - f2)
    if d1 + d2 <= major_sum:
        return 0.0
    c = 0.5 * np.linalg.norm(f2 - f1)
    a = 0.5 * major_sum
    b = math.sqrt(max(a * a - c * c, 0.0))
    centre = 0.5 * (f1 + f2)
    if c > 0:
        u = (f2 - f1) / (2 * c)
    else:
        u = np.array([1.0, 0.0])
    q = p - centre
    y0, y1 = abs(float(q @ u)), abs(float(q[0] * -u[1] + q[1] * u[0]))
    if b == 0:  # degenerate segment
        return math.hypot(max(y0 - a, 0.0), y1)
    return _ellipse_distance_q1(a, b, y0, y1)


TAME_TOL = 1e-9


def tameness_excess(P: LatticePath, K: int) -> float:
    """``max_v d(v, E(P)) - 4 K^j``; the path is tame iff this is ``<= 0``."""
    cls = scale_class(P, K)
    if cls is None or cls < 1:
        raise ValueError("tameness is only defined for paths in SL_j with j >= 1")
    j = cls - 1
    major = (1 + 2 / K ** 2) * P.span
    f1, f2 = P.vertices[0], P.vertices[-1]
    # vertices inside the ellipse need no exact distance
    v = P.vertices.astype(float)
    s = np.linalg.norm(v - f1, axis=1) + np.linalg.norm(v - f2, axis=1)
    out = np.flatnonzero(s > major)
    worst = 0.0
    for k in out:
        # cheap lower bound first: d >= (s - major) / 2
        worst = max(worst, ellipse_distance(v[k], f1, f2, major))
    return worst - 4 * K ** j


def is_tame(P: LatticePath, K: int) -> bool:
    return tameness_excess(P, K) <= TAME_TOL


# ---------------------------------------------------------------------------
# child extraction


def _first_passage(v: np.ndarray, s: int, thresh_num: int, thresh_den: int) -> int | None:
    """First index ``e > s`` with ``|v_e - v_s|^2 * den >= num``."""
    d = v[s + 1:] - v[s]
    hit = np.flatnonzero((d[:, 0] ** 2 + d[:, 1] ** 2) * thresh_den >= thresh_num)
    return None if hit.size == 0 else s + 1 + int(hit[0])


def _tiles(v: np.ndarray, r: int) -> set:
    return set(map(tuple, np.floor_divide(v, r).tolist()))


@dataclass(frozen=True)
class Decomposition:
    ranges: tuple[tuple[int, int], ...]  # inclusive vertex ranges into the parent
    ell: Fraction | None
    j: int                               # scale of the children


def _first_passages(v: np.ndarray, num: int, den: int) -> np.ndarray:
    """``e[a]`` = first index after ``a`` at squared distance ``>= num/den`` from ``v[a]`` (``n`` if none)."""
    n = v.shape[0]
    out = np.full(n, n, dtype=np.int64)
    for a in range(n - 1):
        e = _first_passage(v, a, num, den)
        if e is None:
            # later starts cannot reach either once the tail is too short in steps
            continue
        out[a] = e
    return out


def _extract(v: np.ndarray, j: int, K: int, t: int, limit: int | None) -> list[tuple[int, int]]:
    """Children at scale ``j >= 1`` with threshold ``l = K^j (1 + t/K^2)``.

    A piece starting at ``a`` ends at the first vertex at distance ``>= l``
    from ``v[a]``; it then lies in the ball about ``v[a]`` automatically.
    Pieces are chosen by earliest end among starts at or after the previous
    end (interval scheduling), which maximises their number, skipping any
    piece that would put a 13th visitor in a tile of side ``K^j``.
    """
    num = (K ** j * (K * K + t)) ** 2
    den = K ** 4
    hi2 = (K ** j + K ** (j - 1)) ** 2
    r = K ** j
    n = v.shape[0]
    ends = _first_passages(v, num, den)
    d = v[np.minimum(ends, n - 1)] - v
    ok = (ends < n) & (d[:, 0] ** 2 + d[:, 1] ** 2 <= hi2)
    ends = np.where(ok, ends, n)
    visits: Counter = Counter()
    out = []
    cur = 0
    blocked = np.zeros(n, dtype=bool)
    while limit is None or len(out) < limit:
        cand = np.where(blocked[cur:], n, ends[cur:])
        if cand.size == 0 or cand.min() >= n:
            break
        a = cur + int(np.argmin(cand))
        e = int(ends[a])
        tiles = _tiles(v[a:e + 1], r)
        if any(visits[b] >= MAX_VISITS for b in tiles):
            blocked[a] = True
            continue
        visits.update(tiles)
        out.append((a, e))
        cur = e
    return out


class _ExactSearch:
    """Memoised search for decomposable children over a fixed root path.

    Unlike the threshold scan, a child at scale ``jc`` may end at any vertex
    whose span from its start lies in the ``SL_jc`` window with the ball
    condition, and it is admitted only if it decomposes in turn.  Earliest-end
    interval scheduling over admitted children then maximises their number.
    Indices are absolute positions in the root path.
    """

    def __init__(self, v: np.ndarray, K: int):
        self.v = v
        self.K = K
        self._first: dict[tuple[int, int], int | None] = {}
        self._feasible: dict[tuple[int, int, int], bool] = {}

    def _need(self, a: int, b: int, jc: int) -> int:
        if jc >= 1:
            return self.K
        d = self.v[b] - self.v[a]
        return max(self.K, math.ceil(math.hypot(int(d[0]), int(d[1])) / 2))

    def _window_ends(self, a: int, jc: int) -> np.ndarray:
        lo2 = self.K ** (2 * jc)
        hi2 = (self.K ** jc + self.K ** (jc - 1)) ** 2
        d = self.v[a:] - self.v[a]
        d2 = d[:, 0] ** 2 + d[:, 1] ** 2
        runmax = np.maximum.accumulate(d2)
        ok = (d2 >= lo2) & (d2 <= hi2) & (runmax <= d2)
        return a + np.flatnonzero(ok)

    def feasible(self, a: int, b: int, j: int) -> bool:
        """Whether the node ``v[a..b]`` in ``SL_j`` decomposes down to vertices."""
        if j == 0:
            return True
        key = (a, b, j)
        if key not in self._feasible:
            self._feasible[key] = self.schedule(a, b, j - 1, self._need(a, b, j - 1)) is not None
        return self._feasible[key]

    def first_end(self, a: int, jc: int) -> int | None:
        key = (a, jc)
        if key not in self._first:
            hit = None
            for b in self._window_ends(a, jc).tolist():
                if self.feasible(a, b, jc):
                    hit = b
                    break
            self._first[key] = hit
        return self._first[key]

    def schedule(self, s: int, e: int, jc: int, need: int,
                 limit: int | None = None) -> list[tuple[int, int]] | None:
        v = self.v
        visits: Counter = Counter()
        out: list[tuple[int, int]] = []
        if jc == 0:
            for i in range(s, e + 1):
                p = tuple(v[i].tolist())
                if visits[p] < MAX_VISITS:
                    visits[p] += 1
                    out.append((i, i))
            out = out[:limit] if limit else out
            return out if len(out) >= need else None
        n = len(v)
        fe = np.array([n if (b := self.first_end(a, jc)) is None or b > e else b
                       for a in range(s, e)], dtype=np.int64)
        r = self.K ** jc
        cur = s
        while limit is None or len(out) < limit:
            cand = fe[cur - s:]
            if cand.size == 0 or cand.min() >= n:
                break
            a = cur + int(np.argmin(cand))
            b = int(fe[a - s])
            tiles = _tiles(v[a:b + 1], r)
            if any(visits[t] >= MAX_VISITS for t in tiles):
                fe[a - s] = n
                continue
            visits.update(tiles)
            out.append((a, b))
            cur = b
        return out if len(out) >= need else None


def _check_children(v: np.ndarray, ranges, j: int, K: int, need: int) -> str | None:
    if len(ranges) < need:
        return f"only {len(ranges)} children, need {need}"
    visits: Counter = Counter()
    r = K ** j
    for a, b in ranges:
        if scale_class(LatticePath(v[a:b + 1]), K) != j:
            return f"child {a}..{b} is not in SL_{j}"
        visits.update(_tiles(v[a:b + 1], r))
    if visits and max(visits.values()) > MAX_VISITS:
        return "a tile is visited by more than 12 children"
    for (a0, b0), (a1, b1) in zip(ranges, ranges[1:]):
        if a1 < b0:
            return "children overlap"
    return None


def _candidates(P: LatticePath, K: int, j: int | None, count: int | None,
                errors: list[str]) -> Iterable[Decomposition]:
    _check_K(K)
    v = P.vertices
    if j is None:
        cls = scale_class(P, K)
        if cls is None or cls < 1:
            raise ValueError("decomposition needs a path in SL_j with j >= 1")
        j = cls - 1
    if j == 0:
        visits: Counter = Counter()
        ranges = []
        for i, p in enumerate(map(tuple, v.tolist())):
            if visits[p] < MAX_VISITS:
                visits[p] += 1
                ranges.append((i, i))
        need = max(K, math.ceil(P.span / 2)) if count is None else count
        if len(ranges) < need:
            errors.append(f"only {len(ranges)} vertex children, need {need}")
            return
        yield Decomposition(tuple(ranges[:count] if count else ranges), None, 0)
        return
    need = K if count is None else count
    for t in range(K + 1):
        ranges = _extract(v, j, K, t, count)
        why = _check_children(v, ranges, j, K, need)
        if why is None:
            yield Decomposition(tuple(ranges), Fraction(K ** j * (K * K + t), K * K), j)
        else:
            errors.append(f"t={t}: {why}")


def decompose(P: LatticePath, K: int, j: int | None = None, count: int | None = None) -> Decomposition:
    """Children of ``P`` at scale ``j`` (default: one below ``P``'s own scale).

    The first admissible threshold ``l = K^j (1 + t/K^2)``, ``t = 0..K``, wins.
    If none is admissible, the exact search over all window-valid children
    that decompose in turn is used, as in tree construction.  With ``count``
    set, exactly that many children are required and kept.
    """
    errors: list[str] = []
    for d in _candidates(P, K, j, count, errors):
        return d
    jc = scale_class(P, K) - 1 if j is None else j
    if jc >= 1:
        search = _ExactSearch(P.vertices, K)
        need = K if count is None else count
        ranges = search.schedule(0, len(P) - 1, jc, need, limit=count)
        if ranges is not None and _check_children(P.vertices, ranges, jc, K, need) is None:
            return Decomposition(tuple(ranges), None, jc)
        errors.append("exact search: no admissible children")
    raise DecompositionError("no admissible l: " + "; ".join(errors))


def decompose_children(P: LatticePath, K: int) -> list[LatticePath]:
    d = decompose(P, K)
    return [P.sub(a, b) for a, b in d.ranges]


# ---------------------------------------------------------------------------
# trees


@dataclass(eq=False)
class TreeNode:
    start: int                 # inclusive vertex range into the root path
    end: int
    level: int
    scale: int                 # j - level; the node is in SL_scale (root of an ensemble tree excepted)
    theta: Fraction
    box: BoxId | None
    children: list["TreeNode"] = field(default_factory=list)
    tame: bool | None = None


@dataclass(eq=False)
class PathTree:
    path: LatticePath
    K: int
    root: TreeNode
    depth: int

    def levels(self) -> list[list[TreeNode]]:
        out: list[list[TreeNode]] = [[self.root]]
        while out[-1] and out[-1][0].children:
            out.append([c for n in out[-1] for c in n.children])
        return out

    def nodes(self) -> Iterable[TreeNode]:
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    def subpath(self, node: TreeNode) -> LatticePath:
        return self.path.sub(node.start, node.end)

    def level_sums(self) -> list[Fraction]:
        return [sum((n.theta for n in lvl), Fraction(0)) for lvl in self.levels()]

    def dump(self) -> str:
        lines = []

        def walk(n: TreeNode):
            sp = self.subpath(n)
            tame = "-" if n.tame is None else ("tame" if n.tame else "untamed")
            lines.append(f"{'  ' * n.level}level={n.level} span={sp.span:.3f} "
                         f"flow={n.theta} {tame}")
            for c in n.children:
                walk(c)

        walk(self.root)
        return "\n".join(lines) + "\n"


def _annotate(path: LatticePath, node: TreeNode, K: int) -> None:
    node.box = box_of(path.vertices[node.start], end_scale(node.scale, K))
    if node.scale >= 1:
        node.tame = is_tame(path.sub(node.start, node.end), K)
    else:
        node.tame = True


def _grow(path: LatticePath, node: TreeNode, K: int, count: int | None = None,
          search: _ExactSearch | None = None) -> None:
    """Attach a full subtree below ``node``.

    Thresholds are scanned first and one is kept only if every child it
    produces decomposes in turn.  If none works, the exact search over all
    window-valid children is used; failure there is a genuine obstruction.
    """
    if node.scale == 0:
        return
    if search is None:
        search = _ExactSearch(path.vertices, K)
    sub = path.sub(node.start, node.end)
    errors: list[str] = []

    def attach(ranges, offset):
        share = node.theta / len(ranges)
        node.children = []
        for a, b in ranges:
            child = TreeNode(offset + a, offset + b, node.level + 1, node.scale - 1, share, None)
            _annotate(path, child, K)
            node.children.append(child)
            _grow(path, child, K, search=search)

    for d in _candidates(sub, K, node.scale - 1, count, errors):
        try:
            attach(d.ranges, node.start)
            return
        except DecompositionError as exc:
            errors.append(f"l={d.ell}: child failed ({exc})")
    jc = node.scale - 1
    need = count if count is not None else search._need(node.start, node.end, jc)
    ranges = search.schedule(node.start, node.end, jc, need, limit=count)
    if ranges is not None:
        ranges = [(a - node.start, b - node.start) for a, b in ranges]
        why = _check_children(sub.vertices, ranges, jc, K, need) if jc >= 1 else None
        if why is None:
            attach(ranges, node.start)
            return
        errors.append(f"exact search: {why}")
    else:
        errors.append("exact search: no admissible children")
    node.children = []
    raise DecompositionError(
        f"no decomposition at level {node.level} (span {sub.span:.3f}): " + "; ".join(errors))


def build_tree(P: LatticePath, K: int) -> PathTree:
    """Recursive decomposition of a scaled path down to single vertices."""
    j = scale_class(P, K)
    if j is None or j < 1:
        raise ValueError("build_tree needs a path in SL_j with j >= 1")
    root = TreeNode(0, len(P) - 1, 0, j, Fraction(1), None)
    _annotate(P, root, K)
    _grow(P, root, K)
    return PathTree(P, K, root, j)


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    kappa: float
    delta: float
    K: int
    N: int

    def __post_init__(self):
        _check_K(self.K)
        if not (0 < self.kappa < 1 and 0 < self.delta < 1):
            raise ValueError("kappa and delta must lie in (0, 1)")
        if self.N < 1:
            raise ValueError("N must be positive")

    @property
    def k(self) -> int:
        return self.K.bit_length() - 1

    @property
    def length_cap(self) -> float:
        return self.N ** (1 + self.delta / (self.K ** 2 * self.k))

    @property
    def m(self) -> int:
        """The ``m`` with ``K^(m+1) <= kappa N < K^(m+2)``."""
        kn = Fraction(self.kappa) * self.N
        if kn < self.K:
            raise ValueError("kappa N is below K; no scale m exists")
        e = 0
        while self.K ** (e + 1) <= kn:
            e += 1
        return e - 1

    @property
    def d0(self) -> int:
        return math.floor(Fraction(self.kappa) * self.N / self.K ** (self.m - 1))


def ensemble_membership(P: LatticePath, spec: EnsembleSpec) -> bool:
    vn = box_vn(spec.N)
    v = P.vertices
    inside = ((v[:, 0] >= vn.xmin) & (v[:, 0] <= vn.xmax)
              & (v[:, 1] >= vn.ymin) & (v[:, 1] <= vn.ymax)).all()
    return bool(inside and P.span >= spec.kappa * spec.N and len(P) <= spec.length_cap)


def build_ensemble_tree(P: LatticePath, spec: EnsembleSpec) -> PathTree:
    """Tree of depth ``m`` for an ensemble path: ``d_0`` root children in ``SL_(m-1)``."""
    m = spec.m
    if m < 1:
        raise ValueError("the ensemble has depth m < 1")
    K = spec.K
    root = TreeNode(0, len(P) - 1, 0, m, Fraction(1), box_of(P.vertices[0], end_scale(m, K)))
    _grow(P, root, K, count=spec.d0)
    return PathTree(P, K, root, m)


# ---------------------------------------------------------------------------
# flow functionals


def untamed_flow(tree: PathTree) -> Fraction:
    """Flow carried by untamed nodes on levels ``1 .. depth - 1``."""
    total = Fraction(0)
    for lvl in tree.levels()[1:tree.depth]:
        for n in lvl:
            if n.tame is False:
                total += n.theta
    return total


Shift = Mapping[BoxId, float] | Callable[[BoxId], float]


def _shift(alpha: Shift, box: BoxId) -> float:
    return float(alpha(box)) if callable(alpha) else float(alpha[box])


def tame_open_flow(tree: PathTree, sample: FieldSample, r: int, lam: float, alpha: Shift) -> float:
    """Flow at level ``r`` carried by nodes that are tame and open under their box's shift."""
    if not 0 <= r <= tree.depth:
        raise ValueError(f"level {r} outside 0..{tree.depth}")
    levels = tree.levels()
    total = Fraction(0)
    for n in levels[r]:
        if n.tame is None:
            raise ValueError("tameness is undefined at this level")
        if not n.tame:
            continue
        pts = tree.path.vertices[n.start:n.end + 1]
        box = sample.domain.box
        if not all(p in box for p in map(tuple, pts)):
            raise ValueError("path leaves the sample's box")
        vals = sample.values[pts[:, 0] - box.xmin, pts[:, 1] - box.ymin]
        if np.all(np.abs(vals + _shift(alpha, n.box)) <= lam):
            total += n.theta
    return float(total)


def xi_over_ensemble(paths: Sequence, sample: FieldSample, r: int, lam: float,
                     alpha: Shift, K: int | None = None) -> float:
    """Largest ``tame_open_flow`` over a finite family sharing scale and start box."""
    if not paths:
        raise ValueError("empty path family")
    trees = [p if isinstance(p, PathTree) else build_tree(p, K) for p in paths]
    scales = {t.depth for t in trees}
    boxes = {t.root.box for t in trees}
    if len(scales) != 1 or len(boxes) != 1:
        raise ValueError("paths must share their scale and start box")
    return max(tame_open_flow(t, sample, r, lam, alpha) for t in trees)


# ---------------------------------------------------------------------------
# generators


def drifted_walk(rng: np.random.Generator, start, n_steps: int,
                 probs=(0.7, 0.15, 0.0, 0.15)) -> LatticePath:
    """Walk with step probabilities over E, N, W, S."""
    moves = np.array([(1, 0), (0, 1), (-1, 0), (0, -1)])
    k = rng.choice(4, size=n_steps, p=np.asarray(probs) / np.sum(probs))
    pts = np.vstack([np.zeros((1, 2), dtype=np.int64), np.cumsum(moves[k], axis=0)]) + np.asarray(start)
    return LatticePath(pts)


def loop_erase(path: LatticePath) -> LatticePath:
    out: list[tuple[int, int]] = []
    where: dict = {}
    for p in map(tuple, path.vertices.tolist()):
        if p in where:
            cut = where[p]
            for q in out[cut + 1:]:
                del where[q]
            out = out[:cut + 1]
        else:
            where[p] = len(out)
            out.append(p)
    return LatticePath(np.array(out))


def random_scaled_path(rng: np.random.Generator, K: int, j: int, start=(0, 0),
                       probs=(0.55, 0.2, 0.05, 0.2), tries: int = 1000) -> LatticePath:
    """Loop-erased drifted walk stopped on entering scale ``K^j``, retried until in ``SL_j``."""
    target = K ** j
    for _ in range(tries):
        walk = drifted_walk(rng, start, 4 * target * K + 16, probs)
        P = loop_erase(walk)
        d = P.vertices - P.vertices[0]
        d2 = d[:, 0] ** 2 + d[:, 1] ** 2
        hit = np.flatnonzero(d2 >= target * target)
        if hit.size == 0:
            continue
        Q = P.sub(0, int(hit[0]))
        if scale_class(Q, K) == j:
            return Q
    raise RuntimeError("could not generate a scaled path")

"""Lattice boxes, box tilings, parallelograms and annuli on Z^2.

All exact geometry uses :class:`fractions.Fraction`.  Floats passed in are
converted with ``Fraction(x)``, which is exact, so membership tests and
anchor floors never depend on rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

Point = tuple[int, int]

# 8-connectivity structuring element for flood fills.
_EIGHT = np.ones((3, 3), dtype=bool)


class GeometryError(ValueError):
    """Raised for invalid shapes or infeasible placements."""


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def norm_inf(p: Sequence[float], q: Sequence[float]) -> float:
    """Sup-norm distance: the larger of the coordinate differences."""
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def norm2(p: Sequence[float], q: Sequence[float]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def is_power_of_two(K: int) -> bool:
    return isinstance(K, (int, np.integer)) and K >= 1 and (int(K) & (int(K) - 1)) == 0


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class LatticeBox:
    """The lattice rectangle ``corner + [0, width) x [0, height)``."""

    corner: Point
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"box needs positive sides, got {self.width}x{self.height}")
        object.__setattr__(self, "corner", (int(self.corner[0]), int(self.corner[1])))

    @classmethod
    def from_bounds(cls, xmin: int, xmax: int, ymin: int, ymax: int) -> "LatticeBox":
        return cls((xmin, ymin), xmax - xmin + 1, ymax - ymin + 1)

    @property
    def xmin(self) -> int:
        return self.corner[0]

    @property
    def ymin(self) -> int:
        return self.corner[1]

    @property
    def xmax(self) -> int:
        return self.corner[0] + self.width - 1

    @property
    def ymax(self) -> int:
        return self.corner[1] + self.height - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def size(self) -> int:
        return self.width * self.height

    def __contains__(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def contains_box(self, other: "LatticeBox") -> bool:
        return (self.xmin <= other.xmin and other.xmax <= self.xmax
                and self.ymin <= other.ymin and other.ymax <= self.ymax)

    def intersects(self, other: "LatticeBox") -> bool:
        return not (other.xmax < self.xmin or self.xmax < other.xmin
                    or other.ymax < self.ymin or self.ymax < other.ymin)

    def vertices(self) -> np.ndarray:
        """All vertices as an ``(n, 2)`` integer array, x-major order."""
        xs, ys = np.meshgrid(np.arange(self.xmin, self.xmax + 1),
                             np.arange(self.ymin, self.ymax + 1), indexing="ij")
        return np.stack([xs.ravel(), ys.ravel()], axis=1)

    def boundary_mask(self) -> np.ndarray:
        """Vertices with a lattice neighbour outside the box (the outer ring)."""
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        return m

    def boundary(self) -> np.ndarray:
        idx = np.argwhere(self.boundary_mask())
        return idx + np.array(self.corner)

    def local(self, p) -> tuple[int, int]:
        """Array index of lattice point ``p``."""
        return (int(p[0]) - self.xmin, int(p[1]) - self.ymin)

    def slices_of(self, other: "LatticeBox") -> tuple[slice, slice]:
        """Index slices selecting ``other`` inside an array laid out on ``self``."""
        if not self.contains_box(other):
            raise GeometryError(f"{other} is not inside {self}")
        i0, j0 = self.local(other.corner)
        return (slice(i0, i0 + other.width), slice(j0, j0 + other.height))

    def expand(self, k: int) -> "LatticeBox":
        return LatticeBox((self.xmin - k, self.ymin - k), self.width + 2 * k, self.height + 2 * k)


def box_vn(N: int) -> LatticeBox:
    """``[-N/2, N/2]^2`` intersected with the lattice."""
    if N < 1:
        raise GeometryError(f"N must be a positive integer, got {N}")
    lo = -(N // 2)  # ceil(-N/2)
    hi = N // 2
    return LatticeBox.from_bounds(lo, hi, lo, hi)


def _half_floor(ell) -> int:
    return math.floor(_frac(ell) / 2)


def box_vl(z: Point, ell) -> LatticeBox:
    """Lattice points within sup-distance ``ell/2`` of ``z``."""
    if _frac(ell) <= 0:
        raise GeometryError(f"side length must be positive, got {ell}")
    r = _half_floor(ell)
    return LatticeBox((int(z[0]) - r, int(z[1]) - r), 2 * r + 1, 2 * r + 1)


def centered_box(z: Point, half: int) -> LatticeBox:
    return LatticeBox((int(z[0]) - half, int(z[1]) - half), 2 * half + 1, 2 * half + 1)


# ---------------------------------------------------------------------------
# dyadic tilings


@dataclass(frozen=True, order=True)
class BoxId:
    """Tile ``[a r - 1/2, (a+1) r - 1/2] x [b r - 1/2, (b+1) r - 1/2]``."""

    r: int
    a: int
    b: int

    @property
    def corner(self) -> Point:
        """Lower-left lattice point of the tile."""
        return (self.a * self.r, self.b * self.r)

    @property
    def center(self) -> tuple[Fraction, Fraction]:
        half = Fraction(self.r - 1, 2)
        return (self.a * self.r + half, self.b * self.r + half)

    def lattice_box(self) -> LatticeBox:
        return LatticeBox(self.corner, self.r, self.r)

    def region(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        h = Fraction(1, 2)
        return (self.a * self.r - h, (self.a + 1) * self.r - h,
                self.b * self.r - h, (self.b + 1) * self.r - h)

    def __contains__(self, p) -> bool:
        x0, x1, y0, y1 = self.region()
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def box_of(p: Point, r: int) -> BoxId:
    """The tile of side ``r`` holding lattice point ``p``."""
    if r < 1:
        raise GeometryError(f"tile side must be >= 1, got {r}")
    # tile edges sit on half-integers, so floor division is exact
    return BoxId(int(r), int(p[0]) // r, int(p[1]) // r)


def end_scale(j: int, K: int) -> int:
    """Tile side for end-boxes at level ``j``; sides below one collapse to points."""
    return K ** (j - 2) if j >= 2 else 1


def end_boxes(j: int, K: int, N: int) -> list[BoxId]:
    if j < 1:
        raise GeometryError(f"j must be >= 1, got {j}")
    if not is_power_of_two(K) or K < 2:
        raise GeometryError(f"K must be a power of two >= 2, got {K}")
    if N <= 0:
        return []
    vn = box_vn(N)
    r = end_scale(j, K)
    a0, a1 = vn.xmin // r, vn.xmax // r
    b0, b1 = vn.ymin // r, vn.ymax // r
    return [BoxId(r, a, b) for a in range(a0, a1 + 1) for b in range(b0, b1 + 1)]


# ---------------------------------------------------------------------------
# parallelograms


def rotate_about(points: np.ndarray, center: Point, quarter_turns: int) -> np.ndarray:
    """Rotate integer points counterclockwise by ``quarter_turns * pi/2`` about ``center``."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    c = np.asarray(center, dtype=np.int64)
    d = pts - c
    q = quarter_turns % 4
    for _ in range(q):
        d = np.stack([-d[:, 1], d[:, 0]], axis=1)
    return d + c


@dataclass(frozen=True)
class Parallelogram:
    """Closed parallelogram with corners (a,b), (a+l,b+h), (a+l,b+h+w), (a,b+w)."""

    a: Fraction
    b: Fraction
    l: Fraction
    h: Fraction
    w: Fraction

    @property
    def theta(self) -> float:
        return math.atan2(float(self.h), float(self.l))

    @property
    def slope(self) -> Fraction:
        return self.h / self.l

    @property
    def sin2(self) -> Fraction:
        return self.h * self.h / (self.h * self.h + self.l * self.l)

    @property
    def sincos(self) -> Fraction:
        return self.h * self.l / (self.h * self.h + self.l * self.l)

    @property
    def good(self) -> bool:
        return (self.a.denominator == 1 and self.l.denominator == 1
                and self.l == 16 * self.w)

    @cached_property
    def anchor(self) -> Point:
        # Written relative to the base corner so the anchor moves with the
        # parallelogram; at a = b = 0 this is the usual floor formula.
        a, b, l, h, w = self.a, self.b, self.l, self.h, self.w
        x = math.floor(a + (h + l - 7 * w * self.sin2) / 2)
        y = math.floor(b + (h - l + 7 * w * self.sincos) / 2)
        return (x, y)

    def corners(self) -> list[tuple[Fraction, Fraction]]:
        a, b, l, h, w = self.a, self.b, self.l, self.h, self.w
        return [(a, b), (a + l, b + h), (a + l, b + h + w), (a, b + w)]

    def __contains__(self, p) -> bool:
        x, y = _frac(p[0]), _frac(p[1])
        if not (self.a <= x <= self.a + self.l):
            return False
        lo = self.b + (x - self.a) * self.slope
        return lo <= y <= lo + self.w

    def columns(self) -> Iterable[tuple[int, int, int]]:
        """Yield ``(x, ylo, yhi)`` for every lattice column meeting the region."""
        slope = self.slope
        for x in range(math.ceil(self.a), math.floor(self.a + self.l) + 1):
            lo = self.b + (x - self.a) * slope
            ylo, yhi = math.ceil(lo), math.floor(lo + self.w)
            if ylo <= yhi:
                yield x, ylo, yhi

    def lattice_points(self) -> np.ndarray:
        pts = [(x, y) for x, ylo, yhi in self.columns() for y in range(ylo, yhi + 1)]
        return np.array(pts, dtype=np.int64).reshape(-1, 2)

    def sides(self) -> tuple[np.ndarray, np.ndarray]:
        """Lattice points of the leftmost and rightmost lattice columns."""
        cols = list(self.columns())
        if not cols:
            raise GeometryError("parallelogram contains no lattice points")
        (x0, lo0, hi0), (x1, lo1, hi1) = cols[0], cols[-1]
        left = np.array([(x0, y) for y in range(lo0, hi0 + 1)], dtype=np.int64)
        right = np.array([(x1, y) for y in range(lo1, hi1 + 1)], dtype=np.int64)
        return left, right

    def bounding_box(self) -> LatticeBox:
        pts = self.lattice_points()
        return LatticeBox.from_bounds(int(pts[:, 0].min()), int(pts[:, 0].max()),
                                      int(pts[:, 1].min()), int(pts[:, 1].max()))


def make_parallelogram(a, b, l, h, w) -> Parallelogram:
    """Build a parallelogram after checking ``l >= w >= 10`` and ``l >= h >= 0``."""
    a, b, l, h, w = map(_frac, (a, b, l, h, w))
    if w < 10:
        raise GeometryError(f"width must be at least 10, got {float(w)}")
    if l < w:
        raise GeometryError(f"length {float(l)} is shorter than width {float(w)}")
    if not (0 <= h <= l):
        raise GeometryError(f"rise must satisfy 0 <= h <= l, got h={float(h)}, l={float(l)}")
    return Parallelogram(a, b, l, h, w)


@dataclass(frozen=True)
class RotatedParallelogram:
    """A parallelogram turned by ``quarter_turns * pi/2`` about an integer centre."""

    base: Parallelogram
    center: Point
    quarter_turns: int

    def lattice_points(self) -> np.ndarray:
        return rotate_about(self.base.lattice_points(), self.center, self.quarter_turns)

    def sides(self) -> tuple[np.ndarray, np.ndarray]:
        left, right = self.base.sides()
        return (rotate_about(left, self.center, self.quarter_turns),
                rotate_about(right, self.center, self.quarter_turns))


@dataclass(frozen=True)
class Annulus:
    """A lattice annulus ``region`` that separates ``inner`` from outside ``outer``."""

    inner: LatticeBox
    outer: LatticeBox
    parts: tuple[RotatedParallelogram, ...] = ()
    center: Point | None = None
    _points: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def square(cls, center: Point, inner_side: int, outer_side: int) -> "Annulus":
        """Square ring: the outer box minus the inner box (sides in vertices, odd)."""
        if inner_side % 2 == 0 or outer_side % 2 == 0 or outer_side < inner_side + 2:
            raise GeometryError("square annulus needs odd sides with outer >= inner + 2")
        return cls(centered_box(center, inner_side // 2),
                   centered_box(center, outer_side // 2), (), tuple(center))

    def region_mask(self) -> np.ndarray:
        """Boolean mask of the region on the array of ``outer``."""
        m = np.zeros(self.outer.shape, dtype=bool)
        if self.parts:
            for part in self.parts:
                pts = part.lattice_points()
                inside = ((pts[:, 0] >= self.outer.xmin) & (pts[:, 0] <= self.outer.xmax)
                          & (pts[:, 1] >= self.outer.ymin) & (pts[:, 1] <= self.outer.ymax))
                if not inside.all():
                    raise GeometryError("annulus part leaves the outer box")
                m[pts[:, 0] - self.outer.xmin, pts[:, 1] - self.outer.ymin] = True
        else:
            m[:] = True
            m[self.outer.slices_of(self.inner)] = False
        return m

    def inner_mask(self) -> np.ndarray:
        m = np.zeros(self.outer.shape, dtype=bool)
        m[self.outer.slices_of(self.inner)] = True
        return m

    def surrounds(self) -> bool:
        """True iff no 8-connected route outside the region reaches the inner box."""
        region = self.region_mask()
        inner = self.inner_mask()
        if (region & inner).any():
            return False
        free = np.pad(~region, 1, constant_values=True)
        labels, _ = ndimage.label(free, structure=_EIGHT)
        outside = labels[0, 0]
        return not (labels[1:-1, 1:-1][inner] == outside).any()


def rotate_and_assemble(D: Parallelogram) -> Annulus:
    """Four quarter-turn copies of a good parallelogram about its anchor."""
    if not D.good:
        raise GeometryError("rotate_and_assemble needs a good parallelogram")
    v0 = D.anchor
    parts = tuple(RotatedParallelogram(D, v0, i) for i in range(4))
    inner = box_vl(v0, 2 * D.w)
    outer = box_vl(v0, 4 * D.l)
    ann = Annulus(inner, outer, parts, v0)
    if not ann.surrounds():
        raise GeometryError(f"rotated copies of {D} do not surround the inner box")
    return ann


# ---------------------------------------------------------------------------
# crossing geometry for a pair of end-boxes

_DIHEDRAL = [np.array(m, dtype=np.int64) for m in (
    [[1, 0], [0, 1]], [[0, 1], [1, 0]], [[-1, 0], [0, 1]], [[0, 1], [-1, 0]],
    [[1, 0], [0, -1]], [[0, -1], [1, 0]], [[-1, 0], [0, -1]], [[0, -1], [-1, 0]],
)]


@dataclass(frozen=True)
class LatticeFrame:
    """World coordinates are ``origin + matrix^T @ canonical``."""

    origin: Point
    matrix: tuple[tuple[int, int], tuple[int, int]]

    def to_world(self, p) -> tuple:
        m = self.matrix
        # the matrices are orthogonal, so the inverse is the transpose
        x = m[0][0] * p[0] + m[1][0] * p[1]
        y = m[0][1] * p[0] + m[1][1] * p[1]
        return (self.origin[0] + x, self.origin[1] + y)

    def to_canonical(self, p) -> tuple:
        m = self.matrix
        dx, dy = p[0] - self.origin[0], p[1] - self.origin[1]
        return (m[0][0] * dx + m[0][1] * dy, m[1][0] * dx + m[1][1] * dy)


@dataclass(frozen=True)
class CrossingGeometry:
    """The long parallelogram between two end-boxes and its good sub-parallelograms.

    Parallelograms are stored in the canonical frame (displacement in the
    octant ``dx >= dy >= 0``); boxes are stored in world coordinates.
    """

    frame: LatticeFrame
    D: Parallelogram
    parts: tuple[Parallelogram, ...]
    anchors: tuple[Point, ...]
    boxes: tuple[LatticeBox, ...]
    container: LatticeBox


def _boxes_disjoint(boxes: Sequence[LatticeBox]) -> bool:
    order = sorted(boxes, key=lambda bx: bx.xmin)
    for i, bx in enumerate(order):
        for other in order[i + 1:]:
            if other.xmin > bx.xmax:
                break
            if bx.intersects(other):
                return False
    return True


def crossing_geometry(B: BoxId, B2: BoxId, j: int, K: int) -> CrossingGeometry:
    """Place the crossing parallelogram for paths from ``B`` to ``B2`` at scale ``K^j``.

    The long parallelogram (width ``20 K^(j-1)``, length ``K^j / 4``) is
    centred on the midpoint of the segment joining the tile centres.  One good
    sub-parallelogram of length ``16 w`` is taken from the middle fifth of each
    of ``floor(sqrt(K)/8)`` equal sections, and each gets the surrounding box
    ``V_{K^(j-1/2)}`` about its anchor.  Every containment and disjointness
    claim is checked; failures raise :class:`GeometryError`.
    """
    if not is_power_of_two(K) or K < 2:
        raise GeometryError(f"K must be a power of two >= 2, got {K}")
    if j < 1:
        raise GeometryError(f"j must be >= 1, got {j}")
    n = math.isqrt(K) // 8
    if n < 1:
        raise GeometryError(f"floor(sqrt(K)/8) = 0 for K={K}: no sub-parallelograms")
    r = end_scale(j, K)
    if B.r != r or B2.r != r:
        raise GeometryError(f"end-boxes at level {j} have side {r}")

    cB, cB2 = B.center, B2.center
    dist = math.hypot(float(cB2[0] - cB[0]), float(cB2[1] - cB[1]))
    slack = r * math.sqrt(2)
    if dist + slack < K ** j or dist - slack > (1 + 1 / K) * K ** j:
        raise GeometryError("no path of the requested scale joins these boxes")

    disp = (cB2[0] - cB[0], cB2[1] - cB[1])
    for m in _DIHEDRAL:
        dx = m[0, 0] * disp[0] + m[0, 1] * disp[1]
        dy = m[1, 0] * disp[0] + m[1, 1] * disp[1]
        if dx >= dy >= 0:
            break
    frame = LatticeFrame(B.corner, tuple(tuple(int(v) for v in row) for row in m))
    c1 = frame.to_canonical(cB)
    slope = Fraction(dy) / Fraction(dx)
    mid = ((c1[0] + Fraction(dx) / 2), (c1[1] + Fraction(dy) / 2))

    w = Fraction(20 * K ** (j - 1))
    length = Fraction(K ** j, 4)
    a = mid[0] - length / 2
    b = mid[1] - (length / 2) * slope - w / 2
    D = make_parallelogram(a, b, length, length * slope, w)

    section = length / n
    l_i = 16 * w
    half = math.isqrt(K ** (2 * j - 1)) // 2  # floor(K^(j-1/2) / 2)
    if 2 * l_i > half:
        raise GeometryError(
            f"K={K} too small: V_(4l) about an anchor (half-side {2 * l_i}) "
            f"does not fit in V_(K^(j-1/2)) (half-side {half})")
    parts, anchors, boxes = [], [], []
    for s in range(n):
        xc = a + (s + Fraction(1, 2)) * section
        ai = Fraction(math.floor(xc - l_i / 2))
        if ai < xc - section / 10 or ai + l_i > xc + section / 10:
            raise GeometryError(
                f"K={K} too small: sub-parallelogram of length {float(l_i)} "
                f"exceeds the middle fifth of a section of length {float(section)}")
        bi = b + (ai - a) * slope
        Di = make_parallelogram(ai, bi, l_i, l_i * slope, w)
        if not Di.good:
            raise GeometryError("extracted sub-parallelogram is not good")
        v = Di.anchor
        for cx, cy in Di.corners():
            if abs(cx - v[0]) > 2 * l_i or abs(cy - v[1]) > 2 * l_i:
                raise GeometryError("sub-parallelogram leaves V_(4l) of its anchor")
        parts.append(Di)
        anchors.append(v)
        boxes.append(centered_box(frame.to_world(v), half))

    if not _boxes_disjoint(boxes):
        raise GeometryError("surrounding boxes overlap")
    container = centered_box(B.corner, 2 * K ** j)
    for bx in boxes:
        if not container.contains_box(bx):
            raise GeometryError("surrounding boxes leave V_(4K^j)(z_B)")
    return CrossingGeometry(frame, D, tuple(parts), tuple(anchors), tuple(boxes), container)

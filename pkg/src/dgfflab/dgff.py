"""Green's functions, exact samplers and the harmonic decomposition of the DGFF.

Conventions
-----------
Fields live on the array of a :class:`LatticeBox`, indexed ``[x - x0, y - y0]``.
A domain ``B`` is a mask over that box; its boundary is the set of vertices
of ``B`` with a lattice neighbour outside ``B``.  The field is zero on the
boundary and outside, and on the interior its covariance is the simple
random walk Green's function ``G = 4 (-Laplacian)^-1`` with the boundary
absorbing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import GeometryError, LatticeBox, box_vl, box_vn
from .rng import make_rng

DENSE_LIMIT = 5000
CHI = Fraction(1, 10)


# ---------------------------------------------------------------------------
# domains


def _boundary_of(mask: np.ndarray) -> np.ndarray:
    """Vertices of ``mask`` with a 4-neighbour outside it (the array edge counts as outside)."""
    inner = np.pad(mask, 1, constant_values=False)
    full = (inner[:-2, 1:-1] & inner[2:, 1:-1] & inner[1:-1, :-2] & inner[1:-1, 2:])
    return mask & ~full


@dataclass(frozen=True, eq=False)
class Domain:
    """A finite vertex set, stored as a mask on a bounding box."""

    box: LatticeBox
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.box.shape:
            raise ValueError(f"mask shape {m.shape} does not match box {self.box.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_box(cls, box: LatticeBox) -> "Domain":
        return cls(box, np.ones(box.shape, dtype=bool))

    @property
    def is_rectangle(self) -> bool:
        return bool(self.mask.all())

    @property
    def boundary_mask(self) -> np.ndarray:
        return _boundary_of(self.mask)

    @property
    def interior_mask(self) -> np.ndarray:
        return self.mask & ~_boundary_of(self.mask)

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    def __contains__(self, p) -> bool:
        return p in self.box and bool(self.mask[self.box.local(p)])

    def contains_domain(self, other: "Domain") -> bool:
        if not self.box.contains_box(other.box):
            return False
        return bool(self.mask[self.box.slices_of(other.box)][other.mask].all())

    def _key(self):
        return (self.box, self.mask.tobytes())

    def __hash__(self):
        return hash(self._key())

    def __eq__(self, other):
        return isinstance(other, Domain) and self._key() == other._key()


def box_domain(box: LatticeBox) -> Domain:
    return Domain.from_box(box)


# ---------------------------------------------------------------------------
# Laplacians and Dirichlet problems


def dirichlet_laplacian(free: np.ndarray) -> tuple[sp.csc_matrix, np.ndarray]:
    """``4 I - A`` on the vertices of ``free`` (neighbours outside are absorbing).

    Returns the sparse matrix and the flat indices of the free vertices in
    C order, which is also the row order of the matrix.
    """
    free = np.asarray(free, dtype=bool)
    idx = np.flatnonzero(free)
    n = idx.size
    pos = -np.ones(free.size, dtype=np.int64)
    pos[idx] = np.arange(n)
    pos = pos.reshape(free.shape)
    pp = np.pad(pos, 1, constant_values=-1)
    rows, cols = [], []
    here = pos[free]
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = pp[1 + dx:1 + dx + free.shape[0], 1 + dy:1 + dy + free.shape[1]][free]
        ok = nb >= 0
        rows.append(here[ok])
        cols.append(nb[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    M = (4.0 * sp.identity(n, format="csc") - A.tocsc()).tocsc()
    return M, idx


def _neighbour_sum(values: np.ndarray, where: np.ndarray) -> np.ndarray:
    """Sum over the 4 neighbours of ``values * where`` (zero beyond the array)."""
    v = np.pad(np.where(where, values, 0.0), [(0, 0)] * (values.ndim - 2) + [(1, 1), (1, 1)])
    return v[..., 2:, 1:-1] + v[..., :-2, 1:-1] + v[..., 1:-1, 2:] + v[..., 1:-1, :-2]


def dirichlet_extension(values: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Harmonic function on ``free`` agreeing with ``values`` everywhere else.

    ``values`` may carry leading batch axes.  Vertices of ``free`` must not
    touch the array edge, so every neighbour has a prescribed value.
    """
    free = np.asarray(free, dtype=bool)
    if free.any() and (free[0, :].any() or free[-1, :].any() or free[:, 0].any() or free[:, -1].any()):
        raise ValueError("free vertices must not touch the array edge")
    values = np.asarray(values, dtype=float)
    out = np.array(values, copy=True)
    if not free.any():
        return out
    M, idx = dirichlet_laplacian(free)
    rhs = _neighbour_sum(values, ~free)
    batch = values.shape[:-2]
    rhs = rhs.reshape(batch + (-1,))[..., idx]
    lu = spla.splu(M)
    sol = lu.solve(np.ascontiguousarray(rhs.reshape(-1, idx.size).T))
    flat = out.reshape(batch + (-1,))
    flat[..., idx] = sol.T.reshape(batch + (idx.size,))
    return flat.reshape(values.shape)


def harmonic_residual(values: np.ndarray, where: np.ndarray) -> float:
    """Largest ``|h(x) - mean of neighbours|`` over ``where`` (which must avoid the edge)."""
    where = np.asarray(where, dtype=bool)
    if not where.any():
        return 0.0
    nb = _neighbour_sum(values, np.ones(values.shape, dtype=bool))
    return float(np.max(np.abs(values - nb / 4.0)[where]))


# ---------------------------------------------------------------------------
# Green's matrices


@dataclass(frozen=True, eq=False)
class GreensMatrix:
    """Dense Green's function on the interior vertices of a domain."""

    domain: Domain
    matrix: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)  # flat box indices of interior vertices

    def _pos(self, p) -> int | None:
        if p not in self.domain.box:
            return None
        i, j = self.domain.box.local(p)
        flat = i * self.domain.box.height + j
        k = np.searchsorted(self.index, flat)
        if k < self.index.size and self.index[k] == flat:
            return int(k)
        return None

    def __call__(self, u, v) -> float:
        a, b = self._pos(u), self._pos(v)
        if a is None or b is None:
            return 0.0
        return float(self.matrix[a, b])

    def full(self) -> np.ndarray:
        """Green's function indexed by flat box indices (zero off the interior)."""
        n = self.domain.box.size
        out = np.zeros((n, n))
        out[np.ix_(self.index, self.index)] = self.matrix
        return out


@lru_cache(maxsize=32)
def greens_matrix(domain: Domain) -> GreensMatrix:
    interior = domain.interior_mask
    if not interior.any():
        raise ValueError("domain has no interior vertex")
    M, idx = dirichlet_laplacian(interior)
    dense = M.toarray()
    try:
        c = scipy.linalg.cho_factor(dense, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - the Laplacian is SPD
        raise ValueError("Laplacian is not positive definite") from exc
    G = scipy.linalg.cho_solve(c, 4.0 * np.eye(idx.size))
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return GreensMatrix(domain, G, idx)


@lru_cache(maxsize=32)
def _greens_factor(domain: Domain) -> np.ndarray:
    G = greens_matrix(domain).matrix
    # Cholesky with a pivot floor; G is SPD whenever the interior is nonempty
    L = np.linalg.cholesky(G)
    if np.min(np.diag(L)) < 1e-12:
        raise ValueError("Green's matrix is numerically singular")
    L.setflags(write=False)
    return L


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One realisation of the field; ``values`` is laid out on ``domain.box``."""

    domain: Domain
    values: np.ndarray = field(repr=False)
    seed: int
    sampler: str

    def __call__(self, p) -> float:
        if p not in self.domain.box:
            return 0.0
        return float(self.values[self.domain.box.local(p)])

    def restrict(self, box: LatticeBox) -> np.ndarray:
        """Values on ``box`` (zero where ``box`` leaves the domain's box)."""
        out = np.zeros(box.shape)
        own = self.domain.box
        x0, x1 = max(own.xmin, box.xmin), min(own.xmax, box.xmax)
        y0, y1 = max(own.ymin, box.ymin), min(own.ymax, box.ymax)
        if x0 <= x1 and y0 <= y1:
            out[x0 - box.xmin:x1 - box.xmin + 1, y0 - box.ymin:y1 - box.ymin + 1] = \
                self.values[x0 - own.xmin:x1 - own.xmin + 1, y0 - own.ymin:y1 - own.ymin + 1]
        return out


def sample_dense(domain: Domain, seed: int, size: int | None = None):
    """Exact sample by Cholesky factorisation of the Green's matrix.

    With ``size`` given, returns an array ``(size, width, height)`` of
    independent samples instead of a single :class:`FieldSample`.
    """
    n = domain.n_interior
    if n > DENSE_LIMIT:
        raise ValueError(f"interior has {n} > {DENSE_LIMIT} vertices; use sample_spectral "
                         "for rectangles")
    L = _greens_factor(domain)
    g = greens_matrix(domain)
    rng = make_rng(seed)
    count = 1 if size is None else int(size)
    z = rng.standard_normal((count, n))
    vals = np.zeros((count, domain.box.size))
    vals[:, g.index] = z @ L.T
    vals = vals.reshape((count,) + domain.box.shape)
    if size is None:
        return FieldSample(domain, vals[0], int(seed), "dense")
    return vals


def _sine_eigenvalues(n1: int, n2: int) -> np.ndarray:
    p = np.arange(1, n1 + 1)
    q = np.arange(1, n2 + 1)
    return (4.0 - 2.0 * np.cos(p * np.pi / (n1 + 1)))[:, None] - 2.0 * np.cos(q * np.pi / (n2 + 1))[None, :]


def _check_rect(width: int, height: int) -> None:
    if width < 3 or height < 3:
        raise ValueError(f"rectangle {width}x{height} has no interior vertex")


def spectral_fields(width: int, height: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent fields on a ``width x height`` box, shape ``(size, width, height)``."""
    _check_rect(width, height)
    n1, n2 = width - 2, height - 2
    sd = np.sqrt(4.0 / _sine_eigenvalues(n1, n2))
    xi = rng.standard_normal((size, n1, n2)) * sd
    inner = scipy.fft.dstn(xi, type=1, norm="ortho", axes=(1, 2))
    out = np.zeros((size, width, height))
    out[:, 1:-1, 1:-1] = inner
    return out


def sample_spectral(width: int, height: int, seed: int, corner=(0, 0)) -> FieldSample:
    """Exact sample on a rectangle by synthesis in the discrete sine basis."""
    box = LatticeBox(tuple(corner), width, height)
    vals = spectral_fields(width, height, make_rng(seed), 1)[0]
    return FieldSample(Domain.from_box(box), vals, int(seed), "spectral")


def sample_field(domain: Domain, seed: int) -> FieldSample:
    """Spectral sampler for rectangles, dense sampler otherwise."""
    if domain.is_rectangle:
        return sample_spectral(domain.box.width, domain.box.height, seed, domain.box.corner)
    return sample_dense(domain, seed)


def spectral_covariance(width: int, height: int) -> np.ndarray:
    """Covariance of the spectral sampler over all box vertices (flat C order)."""
    _check_rect(width, height)
    n1, n2 = width - 2, height - 2
    s1 = scipy.fft.dst(np.eye(n1), type=1, norm="ortho", axis=0)
    s2 = scipy.fft.dst(np.eye(n2), type=1, norm="ortho", axis=0)
    S = np.kron(s1, s2)
    cov_int = S @ np.diag((4.0 / _sine_eigenvalues(n1, n2)).ravel()) @ S.T
    mask = np.zeros((width, height), dtype=bool)
    mask[1:-1, 1:-1] = True
    idx = np.flatnonzero(mask)
    out = np.zeros((width * height, width * height))
    out[np.ix_(idx, idx)] = cov_int
    return out


def rect_green_columns(width: int, height: int, sources: np.ndarray) -> np.ndarray:
    """Exact Green's columns ``G(u, .)`` on a rectangle for array-index sources ``u``.

    Returns ``(len(sources), width, height)``.
    """
    _check_rect(width, height)
    n1, n2 = width - 2, height - 2
    lam = 4.0 / _sine_eigenvalues(n1, n2)
    p = np.arange(1, n1 + 1)
    q = np.arange(1, n2 + 1)
    src = np.asarray(sources, dtype=np.int64).reshape(-1, 2)
    out = np.zeros((src.shape[0], width, height))
    ok = (src[:, 0] >= 1) & (src[:, 0] <= n1) & (src[:, 1] >= 1) & (src[:, 1] <= n2)
    if ok.any():
        s = src[ok]
        a = math.sqrt(2.0 / (n1 + 1)) * np.sin(np.outer(s[:, 0], p) * np.pi / (n1 + 1))
        b = math.sqrt(2.0 / (n2 + 1)) * np.sin(np.outer(s[:, 1], q) * np.pi / (n2 + 1))
        coeff = a[:, :, None] * b[:, None, :] * lam
        out[ok, 1:-1, 1:-1] = scipy.fft.dstn(coeff, type=1, norm="ortho", axes=(1, 2))
    return out


# ---------------------------------------------------------------------------
# harmonic decomposition


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """Harmonic extension into ``domain`` of a field's values on its boundary."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __call__(self, p) -> float:
        if p not in self.domain:
            return 0.0
        return float(self.values[self.domain.box.local(p)])

    def residual(self) -> float:
        return harmonic_residual(self.values, self.domain.interior_mask)


def _as_domain(B) -> Domain:
    return Domain.from_box(B) if isinstance(B, LatticeBox) else B


def harmonic_extension(sample: FieldSample, B) -> HarmonicField:
    B = _as_domain(B)
    if not sample.domain.contains_domain(B):
        raise ValueError("subdomain is not contained in the sampled domain")
    vals = sample.restrict(B.box)
    data = np.where(B.boundary_mask, vals, 0.0)
    H = dirichlet_extension(data, B.interior_mask)
    H[~B.mask] = 0.0
    return HarmonicField(B, H)


def markov_decompose(sample: FieldSample, B) -> tuple[FieldSample, HarmonicField]:
    """Split the field on ``B`` into an independent inner field plus a harmonic part."""
    H = harmonic_extension(sample, B)
    B = H.domain
    inner = np.where(B.mask, sample.restrict(B.box) - H.values, 0.0)
    inner[B.boundary_mask] = 0.0
    return FieldSample(B, inner, sample.seed, sample.sampler), H


# ---------------------------------------------------------------------------
# log-correlation


@dataclass(frozen=True)
class LogCorrelationReport:
    N: int
    L: int
    chi: float
    n_points: int
    c1_hat: float            # sup of |G(u,v) - (2/pi) log(L / (|u-v|_inf v 1))| over B^chi
    argmax: tuple
    diagonal_max: float      # the same sup restricted to u = v
    mean_deviation: float
    empirical_max_error: float | None = None
    sample_count: int = 0


def chi_box(N: int, chi=CHI) -> LatticeBox:
    """``{z in V_N : d_inf(z, boundary) > chi N}``."""
    k = box_vn(N).xmax - chi_margin(N, chi)
    if k < 0:
        raise ValueError(f"B^chi is empty for N={N}")
    return LatticeBox.from_bounds(-k, k, -k, k)


def log_correlation_report(N: int, sample_count: int = 0, seed: int = 0,
                           chi=CHI, batch: int = 64) -> LogCorrelationReport:
    """Compare the exact Green's function on ``V_N`` with ``(2/pi) log(L / |u - v|)``.

    The sup runs over all pairs in ``B^chi``.  By the dihedral symmetry of the
    box only sources ``u`` with ``0 <= u_y <= u_x`` are needed.  When
    ``sample_count > 0`` the exact covariance at a handful of pairs is also
    compared with an empirical covariance from spectral samples.
    """
    if N < 2 or N % 2:
        raise ValueError("N must be a positive even integer")
    if N > 512:
        raise ValueError("exact Green mode supports N <= 512")
    vn = box_vn(N)
    L = N
    inner = chi_box(N, chi)
    k = inner.xmax
    off = -vn.xmin  # array index of the origin
    xs = np.arange(-k, k + 1)
    sub = (slice(off - k, off + k + 1), slice(off - k, off + k + 1))
    srcs = [(x, y) for x in range(0, k + 1) for y in range(0, x + 1)]
    best, arg, diag_best, total, count = -1.0, None, 0.0, 0.0, 0
    two_pi = 2.0 / math.pi
    for s in range(0, len(srcs), batch):
        chunk = np.array(srcs[s:s + batch])
        cols = rect_green_columns(vn.width, vn.height, chunk + off)[:, sub[0], sub[1]]
        for c, (ux, uy) in enumerate(chunk):
            d = np.maximum(np.abs(xs[:, None] - ux), np.abs(xs[None, :] - uy))
            dev = np.abs(cols[c] - two_pi * np.log(L / np.maximum(d, 1)))
            m = float(dev.max())
            if m > best:
                i, j = np.unravel_index(int(dev.argmax()), dev.shape)
                best, arg = m, ((int(ux), int(uy)), (int(xs[i]), int(xs[j])))
            diag_best = max(diag_best, float(dev[ux + k, uy + k]))
            # weight by orbit size so the mean is over all ordered pairs
            w = 8 / ((1 + (ux == uy)) * (1 + (uy == 0)) * (1 + (ux == 0)))
            total += w * float(dev.sum())
            count += w * dev.size
    emp = None
    if sample_count > 0:
        rng = make_rng(seed)
        pts = [(0, 0), (k, 0), (k, k), (-k, k // 2)]
        idx = [(p[0] + off, p[1] + off) for p in pts]
        acc = np.zeros((len(pts), len(pts)))
        done = 0
        while done < sample_count:
            m = min(256, sample_count - done)
            f = spectral_fields(vn.width, vn.height, rng, m)
            v = np.stack([f[:, a, b] for a, b in idx], axis=1)
            acc += v.T @ v
            done += m
        emp_cov = acc / sample_count
        exact = rect_green_columns(vn.width, vn.height, np.array(idx))
        ex = np.array([[exact[a][idx[b]] for b in range(len(idx))] for a in range(len(idx))])
        emp = float(np.max(np.abs(emp_cov - ex)))
    return LogCorrelationReport(N, L, float(chi), inner.size, best, arg, diag_best,
                                total / count, emp, int(sample_count))


# ---------------------------------------------------------------------------
# boundary sums and averages


def boundary_greens_sums(z, l1: int, l2: int) -> tuple[np.ndarray, np.ndarray]:
    """``sum_{v in dV_l1(z)} G_{V_l2(z)}(u, v)`` for every ``u`` on ``dV_l1(z)``.

    Returns the boundary points and the matching sums.
    """
    if l1 < 1 or l2 < l1 + 2:
        raise ValueError("need l1 >= 1 and l2 >= l1 + 2")
    outer = box_vl(z, l2)
    inner = box_vl(z, l1)
    D = Domain.from_box(outer)
    ring = np.zeros(outer.shape, dtype=bool)
    ring[outer.slices_of(inner)] = inner.boundary_mask()
    if (ring & ~D.interior_mask).any():
        raise ValueError("inner boundary must lie in the interior of the outer box")
    M, idx = dirichlet_laplacian(D.interior_mask)
    x = spla.spsolve(M.tocsc(), 4.0 * ring.ravel()[idx].astype(float))
    full = np.zeros(outer.size)
    full[idx] = x
    full = full.reshape(outer.shape)
    pts = inner.boundary()
    vals = full[pts[:, 0] - outer.xmin, pts[:, 1] - outer.ymin]
    return pts, vals


def boundary_greens_sum(z, l1: int, l2: int, u) -> float:
    inner = box_vl(z, l1)
    if not (u in inner and (u[0] in (inner.xmin, inner.xmax) or u[1] in (inner.ymin, inner.ymax))):
        raise ValueError(f"{u} is not on the boundary of V_{l1}({z})")
    pts, vals = boundary_greens_sums(z, l1, l2)
    hit = np.flatnonzero((pts[:, 0] == u[0]) & (pts[:, 1] == u[1]))
    return float(vals[hit[0]])


def ring_mask(box: LatticeBox, v0, w: int) -> np.ndarray:
    """Mask on ``box`` of the boundary of ``V_2w(v0)``."""
    inner = box_vl(v0, 2 * w)
    if not box.contains_box(inner):
        raise GeometryError("V_2w(v0) leaves the domain")
    m = np.zeros(box.shape, dtype=bool)
    m[box.slices_of(inner)] = inner.boundary_mask()
    return m


def boundary_average(sample: FieldSample, v0, w: int, alpha: float = 0.0) -> float:
    """Mean of ``eta + alpha`` over the boundary of ``V_2w(v0)``."""
    inner = box_vl(v0, 2 * w)
    if not sample.domain.box.contains_box(inner):
        raise GeometryError("V_2w(v0) leaves the sample's domain")
    m = ring_mask(sample.domain.box, v0, w)
    return float(np.mean(sample.values[m])) + float(alpha)


def ring_quadratic(free: np.ndarray, ring: np.ndarray) -> tuple[float, np.ndarray]:
    """``|ring|^-2 * sum_{u,v in ring} G_free(u, v)`` and the vector ``G_free 1_ring / 4``.

    ``G_free`` is the Green's function killed on leaving ``free``.  The second
    output, viewed as a field, is the solution ``x`` of ``(4 - A) x = 1_ring``.
    """
    free = np.asarray(free, dtype=bool)
    ring = np.asarray(ring, dtype=bool)
    if (ring & ~free).any():
        raise ValueError("ring must lie in the free set")
    M, idx = dirichlet_laplacian(free)
    b = ring.ravel()[idx].astype(float)
    x = spla.splu(M).solve(b)
    n = ring.sum()
    full = np.zeros(free.size)
    full[idx] = x
    return float(4.0 * b @ x / n ** 2), full.reshape(free.shape)


def boundary_average_variance(domain: Domain, v0, w: int) -> float:
    """Exact ``Var(X) = |dV|^-2 sum_{u,v} G(u,v)`` for the ring ``dV_2w(v0)``."""
    ring = ring_mask(domain.box, v0, w)
    if (ring & ~domain.interior_mask).any():
        raise GeometryError("ring must lie in the domain's interior")
    return ring_quadratic(domain.interior_mask, ring)[0]


def conditional_ring_statistics(values: np.ndarray, free: np.ndarray,
                                ring: np.ndarray) -> tuple[float, float]:
    """Ring mean of the harmonic extension into ``free`` and the ring variance under ``G_free``.

    Returns ``(mean_ring(h), |ring|^-2 sum_{u,v in ring} G_free(u, v))`` where
    ``h`` is harmonic on ``free`` and equals ``values`` elsewhere.  Both use
    one factorisation of ``4 I - A`` on ``free``.
    """
    free = np.asarray(free, dtype=bool)
    ring = np.asarray(ring, dtype=bool)
    if (ring & ~free).any():
        raise ValueError("ring must lie in the free set")
    if free[0, :].any() or free[-1, :].any() or free[:, 0].any() or free[:, -1].any():
        raise ValueError("free vertices must not touch the array edge")
    M, idx = dirichlet_laplacian(free)
    rhs = np.column_stack([_neighbour_sum(np.asarray(values, dtype=float), ~free).ravel()[idx],
                           ring.ravel()[idx].astype(float)])
    sol = spla.splu(M).solve(rhs)
    r = ring.ravel()[idx]
    n = int(r.sum())
    return float(sol[r, 0].mean()), float(4.0 * sol[r, 1].sum() / n ** 2)


# ---------------------------------------------------------------------------
# harmonic fluctuation tails


@dataclass(frozen=True)
class FluctuationResult:
    eps: float
    trials: int
    hits: int
    estimate: float
    ci_lo: float
    ci_hi: float
    bound: float
    ell: int
    L: int


def harmonic_measure_rows(B: LatticeBox, targets: np.ndarray) -> np.ndarray:
    """Rows ``M`` with ``H^B(t) = M[t] . eta|_{dB}`` (boundary in ``B.boundary()`` order)."""
    D = Domain.from_box(B)
    M, idx = dirichlet_laplacian(D.interior_mask)
    bpts = B.boundary()
    bflat = (bpts[:, 0] - B.xmin) * B.height + (bpts[:, 1] - B.ymin)
    # boundary-to-interior coupling: each interior vertex sums its boundary neighbours
    pos = {int(f): k for k, f in enumerate(bflat)}
    rows = np.zeros((len(targets), len(bpts)))
    lu = spla.splu(M.T.tocsc())
    ipos = {int(f): k for k, f in enumerate(idx)}
    for t, (x, y) in enumerate(np.asarray(targets)):
        i, j = x - B.xmin, y - B.ymin
        f = i * B.height + j
        if f in pos:
            rows[t, pos[f]] = 1.0
            continue
        e = np.zeros(idx.size)
        e[ipos[f]] = 1.0
        g = lu.solve(e)
        full = np.zeros(B.size)
        full[idx] = g
        full = full.reshape(B.shape)
        for k, (bx, by) in enumerate(bpts):
            a, b = bx - B.xmin, by - B.ymin
            s = 0.0
            for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                na, nb = a + da, b + db
                if 0 <= na < B.width and 0 <= nb < B.height:
                    s += full[na, nb]
            rows[t, k] = s
    return rows


def fluctuation_tail_experiment(D: LatticeBox, B: LatticeBox, U: LatticeBox, eps: float,
                                trials: int, seed: int, C2: float = 1.0,
                                batch: int = 256) -> FluctuationResult:
    """Monte Carlo estimate of ``P(max_{x in U} |H^B(x) - H^B(z_U)| >= eps)``.

    ``z_U`` is the lower-left corner of ``U``.  The field is sampled exactly
    on the rectangle ``D``; ``H^B`` is evaluated through its harmonic measure.
    """
    from .harness.stats import wilson_interval

    if not D.contains_box(B):
        raise GeometryError("B must lie inside D")
    if B.width != B.height or U.width != U.height:
        raise GeometryError("B and U must be square")
    L, ell = B.width - 1, U.width - 1
    # B^chi: distance to the boundary ring strictly above chi L
    m = chi_margin(L)
    if not (U.xmin >= B.xmin + m and U.xmax <= B.xmax - m
            and U.ymin >= B.ymin + m and U.ymax <= B.ymax - m):
        raise GeometryError("U must lie in B^chi")
    if trials < 1:
        raise ValueError("trials must be positive")
    targets = U.vertices()
    rows = harmonic_measure_rows(B, targets)
    ref = np.flatnonzero((targets[:, 0] == U.xmin) & (targets[:, 1] == U.ymin))[0]
    rows = rows - rows[ref]
    bpts = B.boundary()
    bi, bj = bpts[:, 0] - D.xmin, bpts[:, 1] - D.ymin
    rng = make_rng(seed)
    hits, done = 0, 0
    while done < trials:
        n = min(batch, trials - done)
        f = spectral_fields(D.width, D.height, rng, n)
        diffs = f[:, bi, bj] @ rows.T
        hits += int(np.sum(np.max(np.abs(diffs), axis=1) >= eps))
        done += n
    lo, hi = wilson_interval(hits, trials)
    bound = 4.0 * math.exp(-eps ** 2 * L / (8.0 * C2 * ell)) if ell > 0 else 0.0
    return FluctuationResult(float(eps), trials, hits, hits / trials, lo, hi, bound, ell, L)


def chi_margin(L: int, chi=CHI) -> int:
    """Smallest integer ``d`` with ``d > chi L``; points this far from the boundary ring lie in ``B^chi``."""
    return math.floor(Fraction(chi) * L) + 1

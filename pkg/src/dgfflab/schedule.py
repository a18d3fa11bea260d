"""Constant schedules of the multi-scale induction.

Everything here is deterministic.  Quantities that overflow a double
(``c_r = (beta K)^r``, thresholds ``e^{c lambda^2}``) are carried exactly as
integers or in extended precision with :mod:`mpmath`, and reported as
``(mantissa, binary exponent)`` pairs.  ``log`` is the natural logarithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import NormalDist

import mpmath

from .geometry import is_power_of_two

BETA = Fraction(1, 2 ** 9)
DPS = 60


class ScheduleError(ValueError):
    """Invalid schedule input."""


def _mp():
    ctx = mpmath.mp.clone()
    ctx.dps = DPS
    return ctx


MP = _mp()


def _check_K(K: int) -> None:
    if not (isinstance(K, int) and K >= 2 and is_power_of_two(K)):
        raise ScheduleError(f"K must be a power of two >= 2, got {K!r}")


def binary_form(log_value) -> tuple[float, int]:
    """``(mantissa, exponent)`` with ``value = mantissa * 2**exponent`` for ``value = e^log_value``."""
    l2 = MP.mpf(log_value) / MP.log(2)
    e = int(MP.floor(l2))
    return float(MP.power(2, l2 - e)), e


@dataclass(frozen=True)
class ScheduleConfig:
    """Universal constants and exponent constants; ``None`` means derived."""

    C1: float = 1.0
    C2: float = 1.0
    C4: float = 2.0
    C5: float | None = None
    c: float | None = None
    c_prime: float = 1.0
    a: float | None = None
    b: float | None = None
    lambda0: float = 1.0
    K: int = 2 ** 32
    delta: float = 1 / 16

    def __post_init__(self):
        for name in ("C1", "C2", "C4", "c_prime", "lambda0"):
            if not getattr(self, name) > 0:
                raise ScheduleError(f"{name} must be positive")
        for name in ("C5", "c", "a", "b"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ScheduleError(f"{name} must be positive")
        _check_K(self.K)
        if not 0 < self.delta < 1:
            raise ScheduleError("delta must lie in (0, 1)")

    @property
    def beta(self) -> Fraction:
        return BETA

    @property
    def C3(self) -> float:
        return 2 * self.C4 * math.sqrt(self.C2)

    @property
    def C5_value(self):
        return MP.mpf(self.C5) if self.C5 is not None else MP.power(max(2, self.C4), 32)

    @property
    def c_value(self):
        """Smallest ``c`` with ``e^{c l^2} >= 400 e^{2c'(l+eps_0)^2} v C5`` for all ``l >= lambda0``.

        Both constraints divided by ``l^2`` decrease in ``l``, so ``l = lambda0`` binds.
        """
        if self.c is not None:
            return MP.mpf(self.c)
        l0 = MP.mpf(self.lambda0)
        eps0 = epsilon_schedule(self, 0)[0]
        need = max(MP.log(400) + 2 * MP.mpf(self.c_prime) * (l0 + eps0) ** 2, MP.log(self.C5_value))
        return need / l0 ** 2


# ---------------------------------------------------------------------------
# epsilon, delta, c_r


def epsilon_schedule(config: ScheduleConfig, R: int) -> list:
    """``eps_0 .. eps_R``: ``100 sqrt(C2)``, ``8 sqrt(C2)``, then ``4 sqrt(C2) beta^{(r-1)/2}``."""
    if R < 0:
        raise ScheduleError("R must be nonnegative")
    s = MP.sqrt(MP.mpf(config.C2))
    beta = MP.mpf(BETA.numerator) / BETA.denominator
    out = [100 * s, 8 * s]
    for r in range(1, R):
        out.append(4 * s * MP.power(beta, MP.mpf(r) / 2))
    return out[:R + 1]


def epsilon_tail(config: ScheduleConfig, R: int):
    """``sum_{i > R} eps_i`` in closed form (``R >= 1``)."""
    if R < 1:
        raise ScheduleError("the geometric tail starts at R = 1")
    s = MP.sqrt(MP.mpf(config.C2))
    q = MP.sqrt(MP.mpf(BETA.numerator) / BETA.denominator)
    return 4 * s * q ** R / (1 - q)


def epsilon_sum(config: ScheduleConfig, R: int | None = None):
    """``sum_{i=1}^R eps_i``; the full series when ``R`` is ``None``."""
    if R is None:
        return epsilon_schedule(config, 1)[1] + epsilon_tail(config, 1)
    return MP.fsum(epsilon_schedule(config, R)[1:])


def c_schedule(K: int, R: int) -> list[Fraction]:
    """``c_0 .. c_R`` with ``c_r = (beta K)^r``, exact."""
    _check_K(K)
    return [(BETA * K) ** r for r in range(R + 1)]


def _mpq(x: Fraction):
    return MP.mpf(x.numerator) / x.denominator


def _delta_term(K: int, c_r):
    lnK = MP.log(K)
    cr = _mpq(c_r) if isinstance(c_r, Fraction) else MP.mpf(c_r)
    return (MP.log(1 + 2 * cr) + 9 * BETA.denominator * lnK) / cr


def delta_schedule(config: ScheduleConfig | None, K: int, R: int) -> tuple[list, list]:
    """``(delta_0..delta_R, Delta_1..Delta_R)``.

    ``delta_0 = 0``, ``delta_1 = 1/2``, ``delta_{r+1} = delta_r + Delta_r``;
    ``Delta_1 = 9 log K / (beta K^{1/8})`` and
    ``Delta_{r+1} = (log(1 + 2 c_r) + 9 log K / beta) / c_r``.
    """
    _check_K(K)
    if R < 0:
        raise ScheduleError("R must be nonnegative")
    lnK = MP.log(K)
    Delta = [9 * lnK * BETA.denominator / MP.power(K, MP.mpf(1) / 8)]
    cs = c_schedule(K, R)
    for r in range(1, R):
        Delta.append(_delta_term(K, cs[r]))
    Delta = Delta[:R]
    delta = [MP.mpf(0), MP.mpf(1) / 2][:R + 1]
    for r in range(1, R):
        delta.append(delta[r] + Delta[r - 1])
    return delta, Delta


# ---------------------------------------------------------------------------
# summability


@dataclass(frozen=True)
class SummabilityResult:
    K: int
    delta: float
    passed: bool
    total: object          # upper bound on Delta_1 + sum_{r>=1} Delta_{r+1}
    head: object           # exactly summed part
    tail_bound: object     # rigorous bound on the remainder
    horizon: int
    reason: str


def summability_check(config: ScheduleConfig | None, K: int, delta: float,
                      horizon: int = 64) -> SummabilityResult:
    """Whether ``Delta_1 + sum_{r>=1} Delta_{r+1} <= delta``.

    Terms ``r = 1..horizon`` are summed; the remainder is bounded using
    ``log(1 + 2 c_r) <= log 3 + r log(beta K)`` for ``c_r >= 1``, which gives a
    closed-form geometric tail in ``q = 1/(beta K)``.
    """
    _check_K(K)
    if not 0 < delta < 1:
        raise ScheduleError("delta must lie in (0, 1)")
    d = MP.mpf(delta)
    _, Delta = delta_schedule(config, K, 1)
    head = Delta[0]
    if head > d:
        return SummabilityResult(K, delta, False, head, head, MP.mpf(0), 0, "Delta_1 exceeds delta")
    bK = BETA * K
    if bK <= 1:
        return SummabilityResult(K, delta, False, MP.inf, head, MP.inf, 0,
                                 "beta K <= 1: c_r does not grow and the series diverges")
    # c_r as a binary float: exact when K is a power of two, and cheap for huge K
    c, step = MP.mpf(1), _mpq(bK)
    for r in range(1, horizon + 1):
        c *= step
        head += _delta_term(K, c)
        if head > d:
            return SummabilityResult(K, delta, False, head, head, MP.mpf(0), r,
                                     f"partial sum exceeds delta at r={r}")
    q = 1 / _mpq(bK)
    L = MP.log(_mpq(bK))
    A = MP.log(3) + 9 * BETA.denominator * MP.log(K)
    R = horizon
    # sum_{r>R} (A + r L) q^r
    tail = A * q ** (R + 1) / (1 - q) + L * q ** (R + 1) * ((R + 1) - R * q) / (1 - q) ** 2
    total = head + tail
    ok = bool(total <= d)
    return SummabilityResult(K, delta, ok, total, head, tail, R,
                             "passes" if ok else "bound exceeds delta")


def minimal_passing_K(config: ScheduleConfig | None, delta: float, start: int = 2,
                      max_exponent: int = 4096) -> int:
    """Smallest power of two ``>= start`` passing :func:`summability_check`, by doubling."""
    _check_K(start)
    K = start
    while K.bit_length() - 1 <= max_exponent:
        if summability_check(config, K, delta).passed:
            return K
        K *= 2
    raise ScheduleError(f"no passing K up to 2^{max_exponent}")


# ---------------------------------------------------------------------------
# thresholds


def log_K0(config: ScheduleConfig, lam):
    """``log K_0(lambda) = c lambda^2``."""
    return config.c_value * MP.mpf(lam) ** 2


def K0_constraint_holds(config: ScheduleConfig, lam, logK) -> bool:
    """Whether ``e^{logK} >= 400 e^{2c'(lambda + eps_0)^2} v C5``."""
    eps0 = epsilon_schedule(config, 0)[0]
    need = max(MP.log(400) + 2 * MP.mpf(config.c_prime) * (MP.mpf(lam) + eps0) ** 2,
               MP.log(config.C5_value))
    return bool(MP.mpf(logK) >= need)


def log_K_r(config: ScheduleConfig, lam, r: int):
    """``log K_r(lambda)`` by the recursion ``K_r(lambda) = K_{r-1}(lambda + eps_r)``."""
    if r < 0:
        raise ScheduleError("r must be nonnegative")
    if r == 0:
        return log_K0(config, lam)
    eps = epsilon_schedule(config, r)
    return log_K_r(config, MP.mpf(lam) + eps[r], r - 1)


@dataclass(frozen=True)
class Thresholds:
    lam: float
    log_K: list            # log K_0(lambda) .. log K_R(lambda)
    log_K_inf: object

    def binary(self) -> list[tuple[float, int]]:
        return [binary_form(v) for v in self.log_K]


def k_thresholds(config: ScheduleConfig, lam: float, R: int) -> Thresholds:
    """``K_0(lambda) .. K_R(lambda)`` and ``K_inf(lambda)``, in log space.

    Uses the closed form ``K_r(lambda) = K_0(lambda + sum_{i<=r} eps_i)``.
    """
    if lam < config.lambda0:
        raise ScheduleError("lambda must be at least lambda0")
    if R < 0:
        raise ScheduleError("R must be nonnegative")
    eps = epsilon_schedule(config, R)
    logs = []
    acc = MP.mpf(0)
    for r in range(R + 1):
        if r >= 1:
            acc += eps[r]
        logs.append(log_K0(config, MP.mpf(lam) + acc))
    return Thresholds(lam, logs, log_K0(config, MP.mpf(lam) + epsilon_sum(config)))


# ---------------------------------------------------------------------------
# epsilon(lambda)


@dataclass(frozen=True)
class EpsilonOfLambda:
    lam: float
    K: int                 # K(lambda), a power of two
    k: int
    epsilon: object        # 1 / (16 K^2 k)
    log_epsilon: object
    b: object
    implied_a: object      # -log(epsilon) / lambda^2
    K_min_summable: int
    log_K_inf: object
    provenance: dict = field(default_factory=dict)


def b_value(config: ScheduleConfig, K_min: int | None = None):
    """Smallest ``b`` with ``e^{b l^2} >= K(l, 1/16)`` for all ``l >= lambda0``.

    ``K(l, 1/16) = max(K_inf(l), K_min)``; ``log K_inf(l) / l^2 = c (1 + S/l)^2``
    decreases in ``l``, so ``l = lambda0`` binds.
    """
    if config.b is not None:
        return MP.mpf(config.b)
    if K_min is None:
        K_min = minimal_passing_K(config, 1 / 16)
    l0 = MP.mpf(config.lambda0)
    S = epsilon_sum(config)
    return max(config.c_value * (1 + S / l0) ** 2, MP.log(K_min) / l0 ** 2)


def epsilon_of_lambda(config: ScheduleConfig, lam: float,
                      K_min: int | None = None) -> EpsilonOfLambda:
    """``K(lambda)`` and ``epsilon(lambda) = 1 / (16 K(lambda)^2 k(lambda))``.

    ``K(lambda)`` is the smallest power of two that is at least
    ``e^{b lambda^2}``, at least ``K_inf(lambda)``, and passes the
    summability check at ``delta = 1/16``.
    """
    if lam < config.lambda0:
        raise ScheduleError("lambda must be at least lambda0")
    if K_min is None:
        K_min = minimal_passing_K(config, 1 / 16)
    b = b_value(config, K_min)
    lam_mp = MP.mpf(lam)
    log_inf = log_K0(config, lam_mp + epsilon_sum(config))
    target = max(b * lam_mp ** 2, log_inf, MP.log(K_min))
    k = max(1, int(MP.ceil(target / MP.log(2))))
    # guard against rounding at an exact power of two
    while k > 1 and MP.mpf(k - 1) * MP.log(2) >= target:
        k -= 1
    K = 2 ** k
    if not summability_check(config, K, 1 / 16).passed:
        K = minimal_passing_K(config, 1 / 16, start=K)
        k = K.bit_length() - 1
    log_eps = -(MP.log(16) + 2 * k * MP.log(2) + MP.log(k))
    return EpsilonOfLambda(
        lam=lam, K=K, k=k, epsilon=MP.exp(log_eps), log_epsilon=log_eps, b=b,
        implied_a=-log_eps / lam_mp ** 2, K_min_summable=K_min, log_K_inf=log_inf,
        provenance={
            "log_e^{b lambda^2}": float(b * lam_mp ** 2),
            "log_K_inf": float(log_inf),
            "log_K_min_summable": float(MP.log(K_min)),
            "binding": ["e^{b lambda^2}", "K_inf", "summability"][
                [b * lam_mp ** 2, log_inf, MP.log(K_min)].index(target)],
        },
    )


# ---------------------------------------------------------------------------
# trivial bound


def rho(lam: float) -> float:
    """``P(|Z| <= lambda)`` for ``Z ~ N(0, 4)``."""
    if lam < 0:
        raise ScheduleError("lambda must be nonnegative")
    return math.erf(lam / (2 * math.sqrt(2)))


def rho_threshold() -> float:
    """The ``lambda*`` with ``rho(lambda*) = 1/4``, namely ``2 Phi^{-1}(5/8)``."""
    return 2 * NormalDist().inv_cdf(5 / 8)


def trivial_decay_bound(lam: float, kappa: float, N: int) -> float:
    """``N^2 (4 rho)^{kappa N}``, valid when ``rho(lambda) < 1/4``."""
    p = rho(lam)
    if p >= 0.25:
        raise ScheduleError(f"rho({lam}) = {p:.6f} >= 1/4; the bound needs rho < 1/4")
    if N < 1:
        raise ScheduleError("N must be positive")
    if p == 0:
        return 0.0
    return float(MP.mpf(N) ** 2 * MP.power(4 * MP.mpf(p), MP.mpf(kappa) * N))


# ---------------------------------------------------------------------------
# table


@dataclass(frozen=True)
class ScheduleTable:
    config: ScheduleConfig
    lam: float
    R: int
    eps: list
    delta: list
    Delta: list
    c: list[Fraction]
    thresholds: Thresholds

    def rows(self) -> list[dict]:
        out = []
        for r in range(self.R + 1):
            cm, ce = binary_form(MP.log(_mpq(self.c[r])))
            km, ke = binary_form(self.thresholds.log_K[r])
            out.append({
                "r": r,
                "epsilon": MP.nstr(self.eps[r], 17),
                "delta": MP.nstr(self.delta[r], 17),
                "Delta": "" if r == 0 else MP.nstr(self.Delta[r - 1], 17),
                "c": f"{cm!r}*2^{ce}",
                "K": f"{km!r}*2^{ke}",
            })
        return out


def schedule_table(config: ScheduleConfig, lam: float, R: int) -> ScheduleTable:
    eps = epsilon_schedule(config, R)
    delta, Delta = delta_schedule(config, config.K, R)
    return ScheduleTable(config, lam, R, eps, delta, Delta, c_schedule(config.K, R),
                         k_thresholds(config, lam, R))

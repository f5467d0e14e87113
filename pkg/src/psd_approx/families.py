"""Power series distribution families, their star companions and certified truncations.

A power series distribution (PSD) has pmf ``a_k theta^k / h(theta)`` with
``h(theta) = sum_k a_k theta^k``. The *star* law is the PSD induced by ``h'``,
``p*(k) = (k+1) a_{k+1} theta^k / h'(theta)``.

Every infinite sum here is truncated with a rigorous tail bound: each family
supplies ``ratio_sup(k)``, an upper bound on ``a_{j+1}/a_j`` for all ``j >= k``,
so the terms beyond a cutoff are dominated by a geometric series.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

MAX_TERMS = 10**6
# outward rounding applied to every tail bound before it is added to a value
_ROUND_UP = 1.0 + 1e-13


class PsdError(ValueError):
    """Base class for errors raised by this package."""


class DomainError(PsdError):
    """Parameter outside the family's domain."""


class ConvergenceError(PsdError):
    """A series could not be summed with a certified remainder."""


class DegenerateFamilyError(PsdError):
    """The star law is undefined because h'(theta) = 0."""


class TruncationError(PsdError):
    """Tail mass could not be certified within MAX_TERMS terms."""


def round_up(x: float) -> float:
    return x * _ROUND_UP if x > 0 else x


@dataclass(frozen=True)
class PowerSeriesFamily:
    """A named PSD family.

    ``log_coeff`` maps an integer array ``k`` to ``log a_k`` (``-inf`` where
    ``a_k = 0``). ``ratio_sup(k)`` must bound ``a_{j+1}/a_j`` for all ``j >= k``
    with ``a_j > 0``. Families with finite support set ``max_support`` instead
    and ``ratio_sup`` is never consulted past it.
    """

    name: str
    log_coeff: Callable[[np.ndarray], np.ndarray]
    ratio_sup: Callable[[int], float]
    theta_domain: tuple[float, float]
    h_closed: Optional[tuple[Callable[[float], float], ...]] = None
    max_support: Optional[int] = None
    # user-facing parameter (e.g. success probability for bernoulli) <-> theta
    to_theta: Callable[[float], float] = field(default=lambda x: x)
    from_theta: Callable[[float], float] = field(default=lambda t: t)
    param_name: str = "theta"

    def coefficient(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(np.exp(self.log_coeff(np.array([k]))[0]))

    def in_domain(self, theta: float) -> bool:
        lo, hi = self.theta_domain
        return lo < theta < hi

    def __call__(self, param: float) -> "PsdInstance":
        """Instantiate from the natural parameter (``p`` for bernoulli, ``q`` for geometric)."""
        lo, hi = self.param_domain
        if not lo < param < hi:
            raise DomainError(f"{self.name}: {self.param_name}={param} outside ({lo}, {hi})")
        return PsdInstance(self, self.to_theta(param))

    @property
    def param_domain(self) -> tuple[float, float]:
        if self.param_name == "p":
            return (0.0, 1.0)
        return self.theta_domain


@dataclass(frozen=True)
class PsdInstance:
    family: PowerSeriesFamily
    theta: float

    def __post_init__(self):
        if not self.family.in_domain(self.theta):
            lo, hi = self.family.theta_domain
            raise DomainError(f"{self.family.name}: theta={self.theta} outside ({lo}, {hi})")

    @property
    def param(self) -> float:
        return self.family.from_theta(self.theta)

    def pmf(self, k):
        return pmf(self, k)

    def star_pmf(self, k):
        return star_pmf(self, k)


@dataclass(frozen=True)
class TruncatedPmf:
    """Finite probability vector plus a certified bound on the mass it omits.

    When built by :func:`truncate`, the omitted mass lies beyond index ``K`` and
    ``tail_first``/``tail_ratio`` describe the dominating geometric series:
    ``p(K+1+i) <= tail_first * tail_ratio**i``. Convolutions and other derived
    pmfs leave ``tail_ratio`` as ``None``.
    """

    probs: np.ndarray
    tail_bound: float
    tail_first: float = 0.0
    tail_ratio: Optional[float] = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("probs must be one-dimensional")
        if np.any(probs < 0):
            raise ValueError("probs must be nonnegative")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")
        if probs.flags.writeable:
            probs = probs.copy()
            probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def K(self) -> int:
        return len(self.probs) - 1

    def total(self) -> float:
        return float(np.sum(self.probs))

    def tail_moment(self, power: int, offset: float = 0.0) -> float:
        """Certified bound on ``sum_{k>K} (k + offset)**power * p(k)``."""
        if self.tail_first == 0.0:
            return 0.0
        if self.tail_ratio is None:
            raise ValueError("no geometric tail information for this pmf")
        return round_up(self.tail_first * geometric_moment(self.K + 1 + offset, self.tail_ratio, power))


def geometric_moment(a: float, rho: float, power: int) -> float:
    """``sum_{i>=0} (a+i)**power * rho**i`` for ``0 <= rho < 1``, ``a >= 0``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"ratio {rho} not in [0, 1)")
    s = 1.0 - rho
    if power == 0:
        return 1.0 / s
    if power == 1:
        return a / s + rho / s**2
    if power == 2:
        return a * a / s + 2.0 * a * rho / s**2 + rho * (1.0 + rho) / s**3
    raise ValueError("power must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _poisson_log_coeff(k):
    return -gammaln(np.asarray(k, dtype=float) + 1.0)


def _bernoulli_log_coeff(k):
    k = np.asarray(k)
    return np.where((k >= 0) & (k <= 1), 0.0, -np.inf)


def _geometric_log_coeff(k):
    return np.zeros(np.shape(k))


def _log_series_log_coeff(k):
    return -np.log(np.asarray(k, dtype=float) + 1.0)


def _log_h(t):
    return -math.log1p(-t) / t


def _log_h1(t):
    return 1.0 / (t * (1.0 - t)) + math.log1p(-t) / t**2


def _log_h2(t):
    return (
        -(1.0 - 2.0 * t) / (t * t * (1.0 - t) ** 2)
        - 1.0 / ((1.0 - t) * t * t)
        - 2.0 * math.log1p(-t) / t**3
    )


POISSON = PowerSeriesFamily(
    name="poisson",
    log_coeff=_poisson_log_coeff,
    ratio_sup=lambda k: 1.0 / (k + 1),
    theta_domain=(0.0, math.inf),
    h_closed=(math.exp, math.exp, math.exp),
    param_name="lambda",
)

BERNOULLI = PowerSeriesFamily(
    name="bernoulli",
    log_coeff=_bernoulli_log_coeff,
    ratio_sup=lambda k: 1.0 if k < 1 else 0.0,
    theta_domain=(0.0, math.inf),
    h_closed=(lambda t: 1.0 + t, lambda t: 1.0, lambda t: 0.0),
    max_support=1,
    to_theta=lambda p: p / (1.0 - p),
    from_theta=lambda t: t / (1.0 + t),
    param_name="p",
)

GEOMETRIC = PowerSeriesFamily(
    name="geometric",
    log_coeff=_geometric_log_coeff,
    ratio_sup=lambda k: 1.0,
    theta_domain=(0.0, 1.0),
    h_closed=(
        lambda t: 1.0 / (1.0 - t),
        lambda t: (1.0 - t) ** -2,
        lambda t: 2.0 * (1.0 - t) ** -3,
    ),
    param_name="q",
)

# X = Y - 1 with Y logarithmic series, so a_k = 1/(k+1) and support starts at 0
LOGARITHMIC = PowerSeriesFamily(
    name="logarithmic-shifted",
    log_coeff=_log_series_log_coeff,
    ratio_sup=lambda k: 1.0,
    theta_domain=(0.0, 1.0),
    h_closed=(_log_h, _log_h1, _log_h2),
)

FAMILIES: dict[str, PowerSeriesFamily] = {
    f.name: f for f in (POISSON, BERNOULLI, GEOMETRIC, LOGARITHMIC)
}
FAMILIES["logarithmic"] = LOGARITHMIC


def get_family(name: str) -> PowerSeriesFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise PsdError(f"unknown family {name!r}; known: {sorted(FAMILIES)}") from None


# ---------------------------------------------------------------------------
# h and its derivatives
# ---------------------------------------------------------------------------

def _check_theta(family: PowerSeriesFamily, theta: float) -> None:
    if not family.in_domain(theta):
        lo, hi = family.theta_domain
        raise DomainError(f"{family.name}: theta={theta} outside ({lo}, {hi})")


def eval_h_series(family: PowerSeriesFamily, theta: float, order: int, rel_tol: float = 1e-14) -> float:
    """Sum ``h^{(order)}(theta)`` from the coefficients with a certified remainder.

    Term ``k`` is ``k!/(k-order)! a_k theta^(k-order)``. Beyond ``k`` the term
    ratio is at most ``theta * ratio_sup(k) * (k+1)/(k+1-order)``, which must
    eventually drop below one or the family is rejected.
    """
    _check_theta(family, theta)
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    limit = family.max_support if family.max_support is not None else MAX_TERMS
    total = 0.0
    chunk = 64
    start = order
    if start > limit:
        return 0.0
    while start <= limit:
        stop = min(start + chunk, limit + 1)
        k = np.arange(start, stop)
        logc = family.log_coeff(k)
        falling = gammaln(k + 1.0) - gammaln(k + 1.0 - order)
        with np.errstate(divide="ignore", over="ignore"):
            terms = np.exp(logc + falling + (k - order) * math.log(theta))
            total += float(np.sum(terms))
        if not math.isfinite(total):
            break
        if stop > limit:
            return total
        last = stop - 1
        rho = theta * family.ratio_sup(last) * (last + 1) / (last + 1 - order)
        if rho < 1.0:
            remainder = terms[-1] * rho / (1.0 - rho)
            if remainder <= rel_tol * total:
                return total + remainder
        start = stop
        chunk = min(chunk * 2, 1 << 16)
    raise ConvergenceError(f"{family.name}: series for h^({order}) did not converge at theta={theta}")


def eval_h(family: PowerSeriesFamily, theta: float, order: int = 0) -> float:
    """``h(theta)``, ``h'(theta)`` or ``h''(theta)``; closed form when the family has one."""
    _check_theta(family, theta)
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if family.h_closed is not None:
        return float(family.h_closed[order](theta))
    return eval_h_series(family, theta, order)


# ---------------------------------------------------------------------------
# pmfs
# ---------------------------------------------------------------------------

def _log_base_terms(inst: PsdInstance, k: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return inst.family.log_coeff(k) + k * math.log(inst.theta) - math.log(eval_h(inst.family, inst.theta, 0))


def _log_star_terms(inst: PsdInstance, k: np.ndarray) -> np.ndarray:
    h1 = eval_h(inst.family, inst.theta, 1)
    if h1 <= 0.0:
        raise DegenerateFamilyError(f"{inst.family.name}: h'(theta) = 0, star law undefined")
    with np.errstate(divide="ignore"):
        return (
            np.log(k + 1.0)
            + inst.family.log_coeff(k + 1)
            + k * math.log(inst.theta)
            - math.log(h1)
        )


def pmf(inst: PsdInstance, k):
    """``a_k theta^k / h(theta)``; scalar or array ``k``."""
    karr = np.asarray(k)
    if np.any(karr < 0):
        raise ValueError("k must be nonnegative")
    out = np.exp(_log_base_terms(inst, karr.astype(float)))
    return float(out) if out.ndim == 0 else out


def star_pmf(inst: PsdInstance, k):
    """``(k+1) a_{k+1} theta^k / h'(theta)``; scalar or array ``k``."""
    karr = np.asarray(k)
    if np.any(karr < 0):
        raise ValueError("k must be nonnegative")
    out = np.exp(_log_star_terms(inst, karr.astype(float)))
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=4096)
def moments(inst: PsdInstance) -> tuple[float, float]:
    """``(mean, star_mean)`` = ``(theta h'/h, theta h''/h')``."""
    t, fam = inst.theta, inst.family
    h0, h1, h2 = (eval_h(fam, t, o) for o in (0, 1, 2))
    mean = t * h1 / h0
    star_mean = t * h2 / h1 if h1 > 0 else 0.0
    return mean, star_mean


def variance(inst: PsdInstance) -> float:
    """``E X + E X(X-1) - (E X)^2`` with ``E X(X-1) = mean * star_mean``."""
    mean, star_mean = moments(inst)
    return mean * (1.0 + star_mean - mean)


# ---------------------------------------------------------------------------
# certified truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermSequence:
    """Nonnegative sequence ``c_k`` given in log space with a ratio bound.

    ``ratio(k)`` must bound ``c_{j+1}/c_j`` for every ``j >= k``;
    ``support_max`` marks finite support (``c_k = 0`` beyond it).
    """

    log_terms: Callable[[np.ndarray], np.ndarray]
    ratio: Callable[[int], float]
    support_max: Optional[int] = None

    def values(self, K: int) -> np.ndarray:
        k = np.arange(K + 1, dtype=float)
        return np.exp(self.log_terms(k))

    def tail(self, K: int) -> tuple[float, float, Optional[float]]:
        """``(bound, first, ratio)`` for the mass strictly beyond ``K``, or ``inf`` if not certifiable."""
        if self.support_max is not None and K >= self.support_max:
            return 0.0, 0.0, 0.0
        first = float(np.exp(self.log_terms(np.array([K + 1.0])))[0])
        if first == 0.0 and self.support_max is not None:
            return 0.0, 0.0, 0.0
        rho = self.ratio(K + 1)
        if rho >= 1.0:
            return math.inf, first, None
        return round_up(first / (1.0 - rho)), first, rho


def base_sequence(inst: PsdInstance) -> TermSequence:
    fam, t = inst.family, inst.theta
    return TermSequence(
        log_terms=lambda k: _log_base_terms(inst, k),
        ratio=lambda k: t * fam.ratio_sup(k),
        support_max=fam.max_support,
    )


def star_sequence(inst: PsdInstance) -> TermSequence:
    fam, t = inst.family, inst.theta
    # c_j = (j+1) a_{j+1} theta^j, so c_{j+1}/c_j <= theta (k+2)/(k+1) ratio_sup(k+1) for j >= k
    return TermSequence(
        log_terms=lambda k: _log_star_terms(inst, k),
        ratio=lambda k: t * (k + 2.0) / (k + 1.0) * fam.ratio_sup(k + 1),
        support_max=None if fam.max_support is None else fam.max_support - 1,
    )


def certified_cutoff(seq: TermSequence, eps: float, min_K: int = 0) -> int:
    """Smallest ``K >= min_K`` (up to a doubling search) whose certified tail is ``<= eps``."""
    if seq.support_max is not None and seq.support_max <= MAX_TERMS:
        # finite support: also stop at the support edge
        if seq.tail(min_K)[0] <= eps:
            return min_K
        return max(min_K, seq.support_max)
    lo, hi = min_K, max(min_K, 16)
    while seq.tail(hi)[0] > eps:
        lo = hi + 1
        hi *= 2
        if hi > MAX_TERMS:
            if seq.tail(MAX_TERMS)[0] <= eps:
                hi = MAX_TERMS
                break
            raise TruncationError(f"tail not certified below {eps} within {MAX_TERMS} terms")
    while lo < hi:
        mid = (lo + hi) // 2
        if seq.tail(mid)[0] <= eps:
            hi = mid
        else:
            lo = mid + 1
    return hi


def truncate_sequence(seq: TermSequence, eps: float, min_K: int = 0) -> TruncatedPmf:
    K = certified_cutoff(seq, eps, min_K)
    bound, first, rho = seq.tail(K)
    return TruncatedPmf(seq.values(K), bound, first, rho)


@functools.lru_cache(maxsize=4096)
def truncate(inst: PsdInstance, eps: float, which: str = "base", min_K: int = 0) -> TruncatedPmf:
    """Certified truncation of the base or star pmf: ``tail_bound <= eps``.

    Results are memoized; the returned arrays are read-only.
    """
    if not 0.0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    if which == "base":
        seq = base_sequence(inst)
    elif which == "star":
        seq = star_sequence(inst)
    else:
        raise ValueError("which must be 'base' or 'star'")
    return truncate_sequence(seq, eps, min_K)


def paired_truncation(inst: PsdInstance, eps: float, extra: int = 0) -> tuple[TruncatedPmf, TruncatedPmf]:
    """Base and star truncations on a common support ``0..K`` (``K`` at least ``extra``)."""
    b = truncate(inst, eps, "base", extra)
    s = truncate(inst, eps, "star", extra)
    K = max(b.K, s.K)
    if b.K < K:
        b = truncate(inst, eps, "base", K)
    if s.K < K:
        s = truncate(inst, eps, "star", K)
    return b, s


def weighted_l1_gap(inst: PsdInstance, eps: float = 1e-12) -> tuple[float, float]:
    """``sum_{k>=1} k |p(k) - p*(k)|`` as ``(truncated value, certified upper bound)``."""
    b, s = paired_truncation(inst, eps)
    k = np.arange(b.K + 1)
    value = float(np.sum(k * np.abs(b.probs - s.probs)))
    tail = b.tail_moment(1) + s.tail_moment(1)
    return value, round_up(value + tail)


def total_mean(instances: Sequence[PsdInstance]) -> float:
    return math.fsum(moments(i)[0] for i in instances)

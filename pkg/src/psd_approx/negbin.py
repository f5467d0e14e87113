"""Negative binomial approximation bounds for PSD convolutions.

The NB law ``M_{r,p}`` has pmf ``C(r+k-1, k) p^r q^k`` for real ``r > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .families import (
    BERNOULLI,
    GEOMETRIC,
    LOGARITHMIC,
    PsdError,
    PsdInstance,
    TermSequence,
    TruncatedPmf,
    TruncationError,
    moments,
    paired_truncation,
    round_up,
    truncate,
    truncate_sequence,
)
from .poisson import DEFAULT_EPS, BoundEntry, ConvolutionSpec, UnsupportedClosedFormError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class InfeasibleParamsError(PsdError):
    """Moment matching has no valid NB solution (e.g. under-dispersed sums)."""


@dataclass(frozen=True)
class NbParams:
    r: float
    p: float
    mode: str = "one-moment"

    def __post_init__(self):
        if not self.r > 0:
            raise InfeasibleParamsError(f"r must be positive, got {self.r}")
        if not 0.0 < self.p < 1.0:
            raise InfeasibleParamsError(f"p must lie in (0, 1), got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def mean(self) -> float:
        return self.r * self.q / self.p

    @property
    def var(self) -> float:
        return self.r * self.q / self.p**2

    def as_dict(self) -> dict:
        return {"r": self.r, "p": self.p}


@dataclass(frozen=True)
class TauEstimate:
    tau_upper: float
    per_i: tuple[float, ...]
    tau_star: float
    rule: str = "remark"


_LARGE_R = 1e3


def _log_rising(r: float, k: np.ndarray) -> np.ndarray:
    """``log(r (r+1) ... (r+k-1))``; the gammaln difference loses digits for large ``r``."""
    if r <= _LARGE_R:
        return gammaln(r + k) - gammaln(r)
    k = np.asarray(k, dtype=float)
    kmax = int(k.max()) if k.size else 0
    cum = np.concatenate(([0.0], np.cumsum(np.log1p(np.arange(kmax) / r))))
    return k * math.log(r) + cum[k.astype(int)]


def _nb_log_terms(params: NbParams, k: np.ndarray) -> np.ndarray:
    r, p = params.r, params.p
    return _log_rising(r, k) - gammaln(k + 1.0) + r * math.log(p) + k * math.log1p(-p)


def nb_pmf(params: NbParams, k):
    """NB pmf via log-gamma; scalar or array ``k``."""
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 0):
        raise ValueError("k must be nonnegative")
    out = np.exp(_nb_log_terms(params, karr))
    return float(out) if out.ndim == 0 else out


def nb_sequence(params: NbParams) -> TermSequence:
    q, r = params.q, params.r
    # pmf(j+1)/pmf(j) = q (r+j)/(j+1): decreasing in j when r >= 1, increasing towards q otherwise
    return TermSequence(
        log_terms=lambda k: _nb_log_terms(params, k),
        ratio=lambda k: max(q, q * (r + k) / (k + 1.0)),
    )


def default_r(spec: ConvolutionSpec) -> float:
    """``n/5`` for logarithmic specs, ``n`` otherwise."""
    fam = spec.family()
    if fam is not None and fam.name == LOGARITHMIC.name:
        return spec.n / 5.0
    return float(spec.n)


def fit_params(spec: ConvolutionSpec, mode: str = "one-moment", r: Optional[float] = None) -> NbParams:
    """Moment-matched NB parameters.

    ``one-moment`` solves ``E S_n = r q / p`` for ``p`` given ``r`` (default
    :func:`default_r`). ``two-moment`` sets ``p = ES/Var`` and
    ``r = ES^2/(Var - ES)``, which needs over-dispersion.
    """
    es = spec.mean()
    if mode == "one-moment":
        r = default_r(spec) if r is None else r
        if not r > 0:
            raise InfeasibleParamsError(f"r must be positive, got {r}")
        return NbParams(r, r / (r + es), mode)
    if mode == "two-moment":
        var = spec.variance()
        # equidispersed sums (e.g. all-poisson) land within rounding of var == es
        if not var - es > 1e-12 * var:
            raise InfeasibleParamsError(
                f"two-moment matching needs Var(S_n) > E S_n, got Var={var:.6g}, ES={es:.6g}"
            )
        return NbParams(es * es / (var - es), es / var, mode)
    raise ValueError(f"unknown mode {mode!r}")


def shift_tv_upper(inst: PsdInstance, eps: float = DEFAULT_EPS) -> float:
    """Certified upper bound on ``d_TV(X, X+1) = (1/2) sum_k |p(k-1) - p(k)|``."""
    b = truncate(inst, eps)
    pr = b.probs
    prev = np.concatenate(([0.0], pr[:-1]))
    inner = float(np.sum(np.abs(prev - pr)))
    # terms k > K contribute at most p(K) + 2 * tail
    return round_up(0.5 * (inner + pr[-1] + 2.0 * b.tail_bound))


def tau_upper(spec: ConvolutionSpec, eps: float = DEFAULT_EPS) -> TauEstimate:
    """``sqrt(2/pi) (1/4 + sum tau_i - tau*)^(-1/2)``, ``tau_i = min(1/2, 1 - d_TV(X_i, X_i+1))``.

    ``d_TV`` is over-estimated, so each ``tau_i`` is under-estimated and the
    returned ``tau_upper`` errs high.
    """
    per_i = tuple(max(0.0, min(0.5, 1.0 - shift_tv_upper(i, eps))) for i in spec.instances)
    tau_star = max(per_i)
    rest = math.fsum(per_i) - tau_star
    value = SQRT_2_OVER_PI * (0.25 + max(0.0, rest)) ** -0.5
    return TauEstimate(round_up(value), per_i, tau_star, "remark")


def tau_geometric(spec: ConvolutionSpec) -> TauEstimate:
    """``sqrt(2/pi) (sum q_i - 1/4)^(-1/2)``, the smoothing factor in the geometric two-moment closed form."""
    _require_geometric(spec)
    q = tuple(i.theta for i in spec.instances)
    s = math.fsum(q) - 0.25
    if not s > 0:
        raise InfeasibleParamsError("geometric tau rule needs sum q_i > 1/4")
    return TauEstimate(round_up(SQRT_2_OVER_PI * s**-0.5), q, max(q), "geometric")


def _nb_summand(
    inst: PsdInstance, params: NbParams, eps: float, two: bool
) -> tuple[float, float]:
    """``sum_k w(k) |p p(k) + q p*(k-1) - p*(k)|`` for one summand as ``(value, upper)``.

    ``w(k) = k`` or ``k((k-1)/2 + E X)``; ``p*(-1) = 0``.
    """
    mean, _ = moments(inst)
    b, s = paired_truncation(inst, eps, extra=1)
    K = b.K
    k = np.arange(K + 1, dtype=float)
    shifted = np.concatenate(([0.0], s.probs[:-1]))
    diff = np.abs(params.p * b.probs + params.q * shifted - s.probs)
    w = k * ((k - 1.0) / 2.0 + mean) if two else k
    value = float(np.sum(w * diff))
    # tail over k > K, with |x - y| <= x + y; w(k) <= k^2/2 + mean k in the two-parameter case
    def moment(t: TruncatedPmf, offset: float = 0.0) -> float:
        if two:
            return 0.5 * t.tail_moment(2, offset) + mean * t.tail_moment(1, offset)
        return t.tail_moment(1, offset)

    # sum_{k>K} w(k) p*(k-1) = w(K+1) p*(K) + sum_{j>K} w(j+1) p*(j)
    wK1 = (K + 1.0) * (K / 2.0 + mean) if two else K + 1.0
    tail = (
        params.p * moment(b)
        + params.q * (wK1 * s.probs[-1] + moment(s, 1.0))
        + moment(s)
    )
    return value, round_up(value + tail)


def _nb_bound(spec, params, eps, two, scale, method, extra=None) -> BoundEntry:
    try:
        parts = [_nb_summand(i, params, eps, two) for i in spec.instances]
    except TruncationError as exc:
        return BoundEntry(method, math.nan, False, params.as_dict(), target="nb", note=f"truncation failed: {exc}")
    means = spec.means()
    upper = math.fsum(m * u for m, (_, u) in zip(means, parts))
    raw = math.fsum(m * v for m, (v, _) in zip(means, parts))
    c = scale / (params.r * params.q)
    info = dict(params.as_dict(), truncated=c * raw, **(extra or {}))
    return BoundEntry(method, round_up(c * upper), True, info, target="nb")


def nb_bound_one(spec: ConvolutionSpec, params: NbParams, eps: float = DEFAULT_EPS) -> BoundEntry:
    """``1/(rq) sum_i E X_i sum_k k |p p_i(k) + q p*_i(k-1) - p*_i(k)|``."""
    return _nb_bound(spec, params, eps, False, 1.0, "nb_one")


def nb_bound_two(
    spec: ConvolutionSpec,
    params: NbParams,
    tau: Optional[TauEstimate] = None,
    eps: float = DEFAULT_EPS,
) -> BoundEntry:
    """``tau/(rq) sum_i E X_i sum_k k((k-1)/2 + E X_i) |p p_i(k) + q p*_i(k-1) - p*_i(k)|``."""
    tau = tau_upper(spec, eps) if tau is None else tau
    extra = {"tau": tau.tau_upper, "tau_rule": tau.rule}
    return _nb_bound(spec, params, eps, True, tau.tau_upper, "nb_two", extra)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _require_geometric(spec: ConvolutionSpec) -> None:
    fam = spec.family()
    if fam is None or fam.name != GEOMETRIC.name:
        raise UnsupportedClosedFormError("needs a homogeneous geometric spec")


def geometric_eqn1(spec: ConvolutionSpec, params: NbParams) -> float:
    """``1/(rq) sum |p - p_i| q_i / p_i^2``."""
    _require_geometric(spec)
    s = math.fsum(abs(params.p - (1 - i.theta)) * i.theta / (1 - i.theta) ** 2 for i in spec.instances)
    return s / (params.r * params.q)


def geometric_eqn2(spec: ConvolutionSpec, params: NbParams) -> float:
    """``3 sqrt(2/pi) (sum q_i - 1/4)^(-1/2) (sum q_i/p_i)^(-1) sum |1/p_i - 1/p| (q_i/p_i)^2``."""
    _require_geometric(spec)
    q = [i.theta for i in spec.instances]
    s = math.fsum(q) - 0.25
    if not s > 0:
        raise InfeasibleParamsError("needs sum q_i > 1/4")
    ratio = [x / (1 - x) for x in q]
    body = math.fsum(abs(1 / (1 - x) - 1 / params.p) * r * r for x, r in zip(q, ratio))
    return 3.0 * SQRT_2_OVER_PI * s**-0.5 / math.fsum(ratio) * body


def bernoulli_qwqw(spec: ConvolutionSpec) -> float:
    """``2 sum p_i^2 / sum p_i`` (one-moment matching with ``r = n``)."""
    fam = spec.family()
    if fam is None or fam.name != BERNOULLI.name:
        raise UnsupportedClosedFormError("needs a homogeneous bernoulli spec")
    p = [i.param for i in spec.instances]
    return 2.0 * math.fsum(x * x for x in p) / math.fsum(p)


def nb_closed_forms(spec: ConvolutionSpec, params: Optional[NbParams] = None) -> list[BoundEntry]:
    """Closed-form NB bounds for homogeneous bernoulli or geometric specs.

    Geometric specs get ``eqn1`` (with ``params``, default one-moment ``r = n``)
    and ``eqn2`` (always with two-moment parameters); both need every
    ``q_i <= 1/2``. Bernoulli specs get ``qwqw``.
    """
    fam = spec.family()
    if fam is None or fam.name not in (BERNOULLI.name, GEOMETRIC.name):
        raise UnsupportedClosedFormError("NB closed forms need a homogeneous bernoulli or geometric spec")
    if fam.name == BERNOULLI.name:
        r = float(spec.n)
        params = NbParams(r, r / (r + spec.mean()))
        return [BoundEntry("qwqw", round_up(bernoulli_qwqw(spec)), True, params.as_dict(), target="nb")]
    ok = max(i.theta for i in spec.instances) <= 0.5
    note = "" if ok else "requires every q_i <= 1/2"
    params = fit_params(spec, "one-moment") if params is None else params
    out = [BoundEntry("eqn1", round_up(geometric_eqn1(spec, params)), ok, params.as_dict(), target="nb", note=note)]
    try:
        two = fit_params(spec, "two-moment")
        val = geometric_eqn2(spec, two)
    except InfeasibleParamsError as exc:
        out.append(BoundEntry("eqn2", math.nan, False, {}, target="nb", note=f"infeasible: {exc}"))
    else:
        out.append(BoundEntry("eqn2", round_up(val), ok, two.as_dict(), target="nb", note=note))
    return out

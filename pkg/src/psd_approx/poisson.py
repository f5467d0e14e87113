"""Stein-method total variation bounds for Poisson approximation of PSD convolutions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .families import (
    BERNOULLI,
    GEOMETRIC,
    PowerSeriesFamily,
    PsdError,
    PsdInstance,
    TruncationError,
    eval_h,
    moments,
    round_up,
    variance,
    weighted_l1_gap,
)

DEFAULT_EPS = 1e-12


class UnsupportedClosedFormError(PsdError):
    """A closed-form bound was requested for a spec it does not cover."""


@dataclass(frozen=True)
class ConvolutionSpec:
    """``S_n = X_1 + ... + X_n`` for independent PSD summands."""

    instances: tuple[PsdInstance, ...]

    def __init__(self, instances: Iterable[PsdInstance]):
        inst = tuple(instances)
        if not inst:
            raise PsdError("a convolution needs at least one instance")
        object.__setattr__(self, "instances", inst)

    @classmethod
    def iid(cls, inst: PsdInstance, n: int) -> "ConvolutionSpec":
        return cls([inst] * n)

    @property
    def n(self) -> int:
        return len(self.instances)

    def means(self) -> list[float]:
        return [moments(i)[0] for i in self.instances]

    def mean(self) -> float:
        return math.fsum(self.means())

    def variance(self) -> float:
        return math.fsum(variance(i) for i in self.instances)

    def family(self) -> Optional[PowerSeriesFamily]:
        """The common family, or ``None`` for mixed specs."""
        fams = {i.family.name for i in self.instances}
        return self.instances[0].family if len(fams) == 1 else None

    def summary(self) -> str:
        fam = self.family()
        name = fam.name if fam is not None else "mixed"
        return f"{name} n={self.n} ES={self.mean():.7g}"


@dataclass(frozen=True)
class BoundEntry:
    """One bound value.

    ``certified`` entries are rigorous upper bounds on the distance to
    ``target`` (``"poisson"`` or ``"nb"``; parameters in ``params``).
    ``metric`` is ``"tv"`` except for pointwise pmf bounds.
    """

    method: str
    value: float
    certified: bool
    params: dict = field(default_factory=dict)
    target: str = "poisson"
    metric: str = "tv"
    note: str = ""


@dataclass(frozen=True)
class BoundReport:
    entries: list[BoundEntry]
    lambda_used: float

    def by_method(self) -> dict[str, BoundEntry]:
        return {e.method: e for e in self.entries}


def _first_term(lam: float, mean: float) -> float:
    return abs(lam - mean) / max(1.0, math.sqrt(lam))


def delta_g_constant(lam: float, constant: str = "standard") -> float:
    """Bound on the Stein solution increment: ``1/max(1, lam)`` or Barbour-Hall's ``(1-e^-lam)/lam``."""
    if constant == "standard":
        return 1.0 / max(1.0, lam)
    if constant == "barbour-hall":
        return -math.expm1(-lam) / lam
    raise ValueError(f"unknown constant {constant!r}")


def poisson_bound_general(
    spec: ConvolutionSpec,
    lam: Optional[float] = None,
    eps: float = DEFAULT_EPS,
    constant: str = "standard",
) -> BoundEntry:
    """``|lam - ES|/max(1, sqrt lam) + C(lam) sum_i E X_i sum_k k |p_i(k) - p*_i(k)|``.

    ``lam`` defaults to ``E S_n``. The inner series use their certified upper
    bounds, so the result stays an upper bound despite truncation.
    """
    es = spec.mean()
    lam = es if lam is None else lam
    if lam <= 0:
        raise PsdError("lambda must be positive")
    first = _first_term(lam, es)
    try:
        gaps = [weighted_l1_gap(i, eps) for i in spec.instances]
    except TruncationError as exc:
        return BoundEntry("poisson", math.nan, False, {"lambda": lam}, note=f"truncation failed: {exc}")
    means = spec.means()
    upper = math.fsum(m * g[1] for m, g in zip(means, gaps))
    raw = math.fsum(m * g[0] for m, g in zip(means, gaps))
    c = delta_g_constant(lam, constant)
    params = {"lambda": lam, "ES": es, "first_term": first, "truncated": first + c * raw}
    return BoundEntry("poisson", round_up(first + c * upper), True, params)


def crude_M(spec: ConvolutionSpec) -> float:
    """``max_i [h'(theta_i)^2 + h''(theta_i) h(theta_i)]`` over the given thetas."""
    vals = []
    for inst in spec.instances:
        f, t = inst.family, inst.theta
        vals.append(eval_h(f, t, 1) ** 2 + eval_h(f, t, 2) * eval_h(f, t, 0))
    M = max(vals)
    if not (0.0 < M < math.inf):
        raise PsdError(f"M_n = {M} is not finite and positive")
    return M


def poisson_bound_crude(spec: ConvolutionSpec, lam: Optional[float] = None) -> BoundEntry:
    """``|lam - ES|/max(1, sqrt lam) + M_n/(a_0^2 max(1, lam)) sum theta_i^2``."""
    es = spec.mean()
    lam = es if lam is None else lam
    if lam <= 0:
        raise PsdError("lambda must be positive")
    fams = {i.family.name: i.family for i in spec.instances}
    a0 = min(f.coefficient(0) for f in fams.values())
    if a0 <= 0:
        raise PsdError("crude bound needs a_0 > 0")
    M = crude_M(spec)
    s = math.fsum(i.theta**2 for i in spec.instances)
    value = _first_term(lam, es) + M / (a0 * a0 * max(1.0, lam)) * s
    return BoundEntry("crude", round_up(value), True, {"lambda": lam, "M_n": M, "a0": a0})


def iid_bound(inst: PsdInstance, n: int, lam: Optional[float] = None, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """Identical-summand forms: ``(general, crude)`` for ``n`` copies of ``inst``."""
    mean, _ = moments(inst)
    mu = n * mean
    lam = mu if lam is None else lam
    first = _first_term(lam, mu)
    _, gap = weighted_l1_gap(inst, eps)
    general = round_up(first + mu / max(1.0, lam) * gap)
    f, t = inst.family, inst.theta
    M = eval_h(f, t, 1) ** 2 + eval_h(f, t, 2) * eval_h(f, t, 0)
    a0 = f.coefficient(0)
    crude = round_up(first + n * t * t * M / (a0 * a0 * max(1.0, lam)))
    return general, crude


# ---------------------------------------------------------------------------
# closed forms and literature comparisons
# ---------------------------------------------------------------------------

def _require_family(spec: ConvolutionSpec, *families: PowerSeriesFamily) -> PowerSeriesFamily:
    fam = spec.family()
    if fam is None or fam.name not in {f.name for f in families}:
        names = ", ".join(f.name for f in families)
        raise UnsupportedClosedFormError(f"closed forms need a homogeneous {names} spec")
    return fam


def bernoulli_closed_forms(spec: ConvolutionSpec) -> list[BoundEntry]:
    _require_family(spec, BERNOULLI)
    p = [i.param for i in spec.instances]
    lam = math.fsum(p)
    s2 = math.fsum(x * x for x in p)
    base = {"lambda": lam, "sum_p2": s2}
    return [
        BoundEntry("ber", round_up(s2 / max(1.0, lam)), True, base),
        BoundEntry("le-cam", s2, False, base, note="literature comparison"),
        BoundEntry("kerstan", 1.05 * s2 / lam, False, base, note="literature comparison"),
        BoundEntry("barbour-hall", -math.expm1(-lam) / lam * s2, False, base, note="literature comparison"),
    ]


def geometric_closed_forms(spec: ConvolutionSpec) -> list[BoundEntry]:
    _require_family(spec, GEOMETRIC)
    q = [i.theta for i in spec.instances]
    p = [1.0 - x for x in q]
    ratio = [a / b for a, b in zip(q, p)]
    lam = math.fsum(ratio)
    s2 = math.fsum(r * r for r in ratio)
    small_q = max(q) <= 0.5
    base = {"lambda": lam, "sum_ratio2": s2}
    out = [
        BoundEntry(
            "eqn",
            round_up(s2 / max(1.0, lam)),
            small_q,
            base,
            note="" if small_q else "requires every q_i <= 1/2",
        )
    ]
    if len(set(q)) == 1:
        out.append(BoundEntry("barbour", -math.expm1(-lam) * ratio[0], False, base, note="literature comparison"))
    out.append(
        BoundEntry(
            "vellaisamy-upadhye",
            s2 * min(1.0, 1.0 / math.sqrt(2.0 * lam * math.e)),
            False,
            base,
            note="literature comparison",
        )
    )
    out.append(
        BoundEntry(
            "hung-giang",
            2.0 * math.fsum((1.0 - pi) ** 2 + (1.0 - pi) / pi**2 for pi in p),
            False,
            base,
            metric="pointwise",
            note="bounds |P(S_n=k) - P(N=k)| pointwise, not total variation",
        )
    )
    c = -math.expm1(-lam) / lam
    out.append(
        BoundEntry(
            "teerapabolarn-wongkasem",
            math.fsum(min(c / pi, 1.0) * qi * qi / pi for qi, pi in zip(q, p)),
            False,
            base,
            note="literature comparison",
        )
    )
    return out


def poisson_closed_forms(spec: ConvolutionSpec) -> list[BoundEntry]:
    """Family-specific closed forms (``lambda = E S_n``) plus literature comparison values."""
    fam = _require_family(spec, BERNOULLI, GEOMETRIC)
    if fam.name == BERNOULLI.name:
        return bernoulli_closed_forms(spec)
    return geometric_closed_forms(spec)


# ---------------------------------------------------------------------------
# limit-theorem probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeRow:
    n: int
    lambda0: float
    bound: float
    matched_bound: float
    crude: float


@dataclass(frozen=True)
class ProbeTable:
    family: str
    rows: list[ProbeRow]

    @property
    def monotone(self) -> bool:
        b = [r.bound for r in self.rows]
        return all(x >= y for x, y in zip(b, b[1:]))


def convergence_probe(
    family: PowerSeriesFamily,
    schedule: Callable[[int], Sequence[float]],
    n_values: Sequence[int],
    eps: float = DEFAULT_EPS,
) -> ProbeTable:
    """Bounds along a triangular array ``n -> thetas`` against ``N(lambda a_1/a_0)``.

    ``lambda`` is the running ``sum theta_i``. ``matched_bound`` uses ``E S_n``
    instead. Monotonicity is reported via :attr:`ProbeTable.monotone`, never
    asserted.
    """
    ratio = family.coefficient(1) / family.coefficient(0)
    rows = []
    for n in n_values:
        thetas = list(schedule(n))
        spec = ConvolutionSpec(PsdInstance(family, t) for t in thetas)
        lam0 = math.fsum(thetas) * ratio
        rows.append(
            ProbeRow(
                n=n,
                lambda0=lam0,
                bound=poisson_bound_general(spec, lam0, eps).value,
                matched_bound=poisson_bound_general(spec, None, eps).value,
                crude=poisson_bound_crude(spec, lam0).value,
            )
        )
    return ProbeTable(family.name, rows)

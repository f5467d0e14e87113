"""Brute-force ground truth: exact convolution, reference pmfs and total variation.

Every pmf here is a lower envelope of the true one; ``tail_bound`` bounds the
probability mass that is missing from ``probs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .families import PsdError, TermSequence, TruncatedPmf, truncate, truncate_sequence
from .negbin import NbParams, nb_sequence
from .poisson import BoundEntry, BoundReport, ConvolutionSpec

SUPPORT_CAP = 10**6
ORACLE_EPS = 1e-13


class SupportOverflowError(PsdError):
    """Convolution support would exceed the configured cap."""


def convolve(pmfs: Sequence[TruncatedPmf], cap: int = SUPPORT_CAP) -> TruncatedPmf:
    """Iterated direct convolution; missing mass is bounded by the sum of the input tails."""
    if not pmfs:
        raise PsdError("need at least one pmf")
    length = sum(len(t.probs) - 1 for t in pmfs) + 1
    if length > cap:
        raise SupportOverflowError(f"support {length} exceeds cap {cap}")
    acc = pmfs[0].probs
    for t in pmfs[1:]:
        acc = np.convolve(acc, t.probs)
    tail = math.fsum(t.tail_bound for t in pmfs)
    return TruncatedPmf(np.clip(acc, 0.0, None), tail)


def poisson_sequence(lam: float) -> TermSequence:
    return TermSequence(
        log_terms=lambda k: k * math.log(lam) - lam - gammaln(k + 1.0),
        ratio=lambda k: lam / (k + 1.0),
    )


def reference_pmf(kind: str, params, eps: float = ORACLE_EPS) -> TruncatedPmf:
    """Certified truncation of ``Poi(lambda)`` (``params`` a float) or ``NB(r, p)`` (``NbParams``)."""
    if kind == "poisson":
        lam = float(params)
        if not lam > 0:
            raise PsdError("lambda must be positive")
        return truncate_sequence(poisson_sequence(lam), eps)
    if kind in ("nb", "negative-binomial"):
        if not isinstance(params, NbParams):
            params = NbParams(**params)
        return truncate_sequence(nb_sequence(params), eps)
    raise ValueError(f"unknown reference kind {kind!r}")


def tv_distance(a: TruncatedPmf, b: TruncatedPmf) -> tuple[float, float]:
    """Half L1 distance over the union support, with error bar ``(tail_a + tail_b)/2``."""
    n = max(len(a.probs), len(b.probs))
    x = np.zeros(n)
    y = np.zeros(n)
    x[: len(a.probs)] = a.probs
    y[: len(b.probs)] = b.probs
    value = 0.5 * float(np.sum(np.abs(x - y)))
    return value, 0.5 * (a.tail_bound + b.tail_bound)


def spec_pmf(spec: ConvolutionSpec, eps: float = ORACLE_EPS, cap: int = SUPPORT_CAP) -> TruncatedPmf:
    return convolve([truncate(i, eps) for i in spec.instances], cap)


@dataclass(frozen=True)
class Check:
    method: str
    target: str
    bound: float
    oracle_tv: float
    error_bar: float

    @property
    def margin(self) -> float:
        """``bound - (oracle_tv - error_bar)``; negative means a violation."""
        return self.bound - (self.oracle_tv - self.error_bar)


@dataclass
class ValidationReport:
    summary: str
    checks: list[Check] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if c.margin < 0]

    @property
    def oracle_tv(self) -> dict[str, float]:
        return {c.target: c.oracle_tv for c in self.checks}


def _target_key(entry: BoundEntry, report: BoundReport) -> tuple:
    if entry.target == "poisson":
        return ("poisson", entry.params.get("lambda", report.lambda_used))
    return ("nb", entry.params["r"], entry.params["p"])


def certify(
    spec: ConvolutionSpec,
    reports: Sequence[BoundReport],
    eps: float = ORACLE_EPS,
    cap: int = SUPPORT_CAP,
) -> ValidationReport:
    """Check every certified TV entry against the exact distance to its target law."""
    out = ValidationReport(spec.summary())
    try:
        s_pmf = spec_pmf(spec, eps, cap)
    except SupportOverflowError as exc:
        out.skipped.append(f"oracle skipped: {exc}")
        return out
    cache: dict[tuple, tuple[float, float]] = {}
    for report in reports:
        for e in report.entries:
            if not e.certified or e.metric != "tv" or not math.isfinite(e.value):
                continue
            key = _target_key(e, report)
            if key not in cache:
                if key[0] == "poisson":
                    ref = reference_pmf("poisson", key[1], eps)
                else:
                    ref = reference_pmf("nb", NbParams(key[1], key[2]), eps)
                cache[key] = tv_distance(s_pmf, ref)
            tv, err = cache[key]
            label = "poisson" if key[0] == "poisson" else "nb"
            out.checks.append(Check(e.method, f"{label}{key[1:]}", e.value, tv, err))
    return out

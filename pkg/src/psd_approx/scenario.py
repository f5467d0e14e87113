"""Scenario files: parsing, running and table output.

A scenario is a line-oriented ``key = value`` file::

    name = table2
    family = geometric
    range 1-10 theta 0.20
    range 11-20 theta 0.18
    n_values = 10, 20
    methods = poisson, nb_one, nb_two
    nb_r_rule = n
    tau_rule = geometric

``range a-b theta v`` lines give the parameter of summands ``a..b``; a
``thetas = v1, v2, ...`` line lists them explicitly instead. Values are the
family's natural parameter (success probability ``p`` for bernoulli, ``q``
for geometric, the mean for poisson, ``theta`` for logarithmic-shifted).
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .families import DomainError, PsdError, get_family
from .negbin import (
    InfeasibleParamsError,
    fit_params,
    nb_bound_one,
    nb_bound_two,
    nb_closed_forms,
    tau_geometric,
    tau_upper,
)
from .oracle import SUPPORT_CAP, certify
from .poisson import (
    DEFAULT_EPS,
    BoundEntry,
    BoundReport,
    ConvolutionSpec,
    UnsupportedClosedFormError,
    poisson_bound_crude,
    poisson_bound_general,
    poisson_closed_forms,
)

POISSON_CLOSED = ("eqn", "ber", "le-cam", "kerstan", "barbour-hall", "barbour",
                  "vellaisamy-upadhye", "hung-giang", "teerapabolarn-wongkasem")
NB_CLOSED = ("eqn1", "eqn2", "qwqw")
METHODS = ("poisson", "poisson_bh", "crude", "nb_one", "nb_two") + POISSON_CLOSED + NB_CLOSED
R_RULES = ("n", "n/5")
TAU_RULES = ("remark", "geometric")
FORMATS = ("csv", "markdown")
INFEASIBLE = "—"


class ScenarioParseError(PsdError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<scenario>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class Scenario:
    name: str
    family: str
    params: list[float]
    n_values: list[int]
    methods: list[str]
    schedule: list[tuple[int, int, float]] = field(default_factory=list)
    nb_r_rule: Union[str, float] = "n"
    tau_rule: str = "remark"
    format: str = "csv"
    output: str = "-"

    def spec(self, n: int) -> ConvolutionSpec:
        fam = get_family(self.family)
        return ConvolutionSpec(fam(v) for v in self.params[:n])

    def r_for(self, n: int) -> float:
        if self.nb_r_rule == "n":
            return float(n)
        if self.nb_r_rule == "n/5":
            return n / 5.0
        return float(self.nb_r_rule)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_RANGE = re.compile(r"^range\s+(\d+)\s*-\s*(\d+)\s+theta\s+(\S+)$")
_KV = re.compile(r"^([A-Za-z_]+)\s*=\s*(.*)$")


def _floats(text: str, lineno: int, source: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ScenarioParseError(f"expected numbers, got {text!r}", lineno, source) from None


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    kv: dict[str, tuple[str, int]] = {}
    ranges: list[tuple[int, int, float, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RANGE.match(line)
        if m:
            try:
                v = float(m.group(3))
            except ValueError:
                raise ScenarioParseError(f"bad theta {m.group(3)!r}", lineno, source) from None
            ranges.append((int(m.group(1)), int(m.group(2)), v, lineno))
            continue
        m = _KV.match(line)
        if not m:
            raise ScenarioParseError(f"cannot parse line {raw.strip()!r}", lineno, source)
        key = m.group(1).lower()
        if key in kv:
            raise ScenarioParseError(f"duplicate key {key!r}", lineno, source)
        kv[key] = (m.group(2).strip(), lineno)

    def need(key: str) -> tuple[str, int]:
        if key not in kv:
            raise ScenarioParseError(f"missing required key {key!r}", None, source)
        return kv[key]

    known = {"name", "family", "thetas", "n_values", "methods", "nb_r_rule", "tau_rule", "format", "output"}
    for key, (_, lineno) in kv.items():
        if key not in known:
            raise ScenarioParseError(f"unknown key {key!r}", lineno, source)

    family_name, fam_line = need("family")
    try:
        fam = get_family(family_name)
    except PsdError as exc:
        raise ScenarioParseError(str(exc), fam_line, source) from None

    n_text, n_line = need("n_values")
    n_values = []
    for x in _floats(n_text, n_line, source):
        if x != int(x) or x < 1:
            raise ScenarioParseError(f"n_values must be positive integers, got {x}", n_line, source)
        n_values.append(int(x))
    if not n_values:
        raise ScenarioParseError("n_values is empty", n_line, source)
    n_max = max(n_values)

    schedule: list[tuple[int, int, float]] = []
    if "thetas" in kv:
        if ranges:
            raise ScenarioParseError("use either range lines or thetas, not both", kv["thetas"][1], source)
        t_text, t_line = kv["thetas"]
        params = _floats(t_text, t_line, source)
        if len(params) < n_max:
            raise ScenarioParseError(f"thetas has {len(params)} values, n_values needs {n_max}", t_line, source)
        lines = [t_line] * len(params)
    else:
        if not ranges:
            raise ScenarioParseError("empty schedule: give range lines or thetas", None, source)
        ranges.sort()
        expected = 1
        params, lines = [], []
        for a, b, v, lineno in ranges:
            if a != expected or b < a:
                raise ScenarioParseError(
                    f"range {a}-{b} leaves a gap or overlaps (expected start {expected})", lineno, source
                )
            params.extend([v] * (b - a + 1))
            lines.extend([lineno] * (b - a + 1))
            schedule.append((a, b, v))
            expected = b + 1
        if expected - 1 < n_max:
            raise ScenarioParseError(f"ranges cover 1-{expected - 1} but n_values needs {n_max}", None, source)
    lo, hi = fam.param_domain
    for v, lineno in zip(params, lines):
        if not lo < v < hi:
            raise DomainError(f"{source}:{lineno}: {fam.name} {fam.param_name}={v} outside ({lo}, {hi})")

    methods_text, m_line = kv.get("methods", ("poisson, nb_one, nb_two", None))
    methods = [x.strip() for x in methods_text.split(",") if x.strip()]
    for mth in methods:
        if mth not in METHODS:
            raise ScenarioParseError(f"unknown method {mth!r}; known: {', '.join(METHODS)}", m_line, source)
    if not methods:
        raise ScenarioParseError("methods is empty", m_line, source)

    r_rule: Union[str, float] = "n"
    if "nb_r_rule" in kv:
        text, lineno = kv["nb_r_rule"]
        if text in R_RULES:
            r_rule = text
        else:
            try:
                r_rule = float(text)
            except ValueError:
                raise ScenarioParseError(f"nb_r_rule must be n, n/5 or a number, got {text!r}", lineno, source) from None
            if not r_rule > 0:
                raise ScenarioParseError("nb_r_rule must be positive", lineno, source)

    tau_rule, t_line = kv.get("tau_rule", ("remark", None))
    if tau_rule not in TAU_RULES:
        raise ScenarioParseError(f"tau_rule must be one of {TAU_RULES}", t_line, source)
    fmt, f_line = kv.get("format", ("csv", None))
    if fmt not in FORMATS:
        raise ScenarioParseError(f"format must be one of {FORMATS}", f_line, source)

    return Scenario(
        name=kv.get("name", (Path(source).stem, None))[0],
        family=fam.name,
        params=params,
        n_values=n_values,
        methods=methods,
        schedule=schedule,
        nb_r_rule=r_rule,
        tau_rule=tau_rule,
        format=fmt,
        output=kv.get("output", ("-", None))[0],
    )


def parse_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read file: {exc}", None, str(path)) from None
    return parse_scenario_text(text, str(path))


def bundled_scenario(name: str) -> Scenario:
    """Load ``table2`` or ``table3`` from the package data."""
    ref = resources.files("psd_approx").joinpath("scenarios", f"{name}.scenario")
    return parse_scenario_text(ref.read_text(), f"{name}.scenario")


def dump_scenario(s: Scenario) -> str:
    def num(x: float) -> str:
        return repr(float(x))

    out = [f"name = {s.name}", f"family = {s.family}"]
    if s.schedule:
        out += [f"range {a}-{b} theta {num(v)}" for a, b, v in s.schedule]
    else:
        out.append("thetas = " + ", ".join(num(v) for v in s.params))
    out.append("n_values = " + ", ".join(str(n) for n in s.n_values))
    out.append("methods = " + ", ".join(s.methods))
    r = s.nb_r_rule if isinstance(s.nb_r_rule, str) else num(s.nb_r_rule)
    out += [f"nb_r_rule = {r}", f"tau_rule = {s.tau_rule}", f"format = {s.format}", f"output = {s.output}"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    value: Optional[float]
    certified: bool = False
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.value is not None and math.isfinite(self.value)


@dataclass
class ResultTable:
    name: str
    methods: list[str]
    rows: list[tuple[int, dict[str, Cell]]]
    metadata: dict = field(default_factory=dict)
    validations: list = field(default_factory=list)

    def column(self, method: str) -> list[Optional[float]]:
        return [cells[method].value for _, cells in self.rows]

    @property
    def violations(self) -> list:
        return [c for v in self.validations for c in v.violations]

    def all_infeasible(self) -> bool:
        return all(not c.feasible for _, cells in self.rows for c in cells.values())


def _cell(entry: BoundEntry) -> Cell:
    if not math.isfinite(entry.value):
        return Cell(None, False, entry.note or "not computable")
    return Cell(entry.value, entry.certified, entry.note)


def _evaluate(s: Scenario, spec: ConvolutionSpec, n: int, method: str, eps: float) -> BoundEntry:
    if method == "poisson":
        return poisson_bound_general(spec, None, eps)
    if method == "poisson_bh":
        e = poisson_bound_general(spec, None, eps, constant="barbour-hall")
        return BoundEntry("poisson_bh", e.value, e.certified, e.params, note=e.note)
    if method == "crude":
        return poisson_bound_crude(spec)
    if method == "nb_one":
        return nb_bound_one(spec, fit_params(spec, "one-moment", s.r_for(n)), eps)
    if method == "nb_two":
        params = fit_params(spec, "two-moment")
        tau = tau_geometric(spec) if s.tau_rule == "geometric" else tau_upper(spec, eps)
        return nb_bound_two(spec, params, tau, eps)
    if method in POISSON_CLOSED:
        entries = {e.method: e for e in poisson_closed_forms(spec)}
    else:
        params = fit_params(spec, "one-moment", s.r_for(n)) if method == "eqn1" else None
        entries = {e.method: e for e in nb_closed_forms(spec, params)}
    if method not in entries:
        raise UnsupportedClosedFormError(f"{method} is not available for this spec")
    return entries[method]


def run_scenario(s: Scenario, eps: float = DEFAULT_EPS, certify_rows: bool = False,
                 cap: int = SUPPORT_CAP) -> ResultTable:
    """One row per ``n``; infeasible methods become empty cells and the run continues."""
    rows = []
    validations = []
    for n in s.n_values:
        spec = s.spec(n)
        cells: dict[str, Cell] = {}
        entries: list[BoundEntry] = []
        for method in s.methods:
            try:
                entry = _evaluate(s, spec, n, method, eps)
            except (InfeasibleParamsError, UnsupportedClosedFormError) as exc:
                cells[method] = Cell(None, False, str(exc))
                continue
            cells[method] = _cell(entry)
            entries.append(entry)
        rows.append((n, cells))
        if certify_rows:
            report = BoundReport(entries, spec.mean())
            validations.append(certify(spec, [report], cap=cap))
    metadata = {
        "family": s.family,
        "lambda_rule": "E S_n",
        "nb_r_rule": s.nb_r_rule,
        "tau_rule": s.tau_rule,
        "eps": eps,
    }
    return ResultTable(s.name, list(s.methods), rows, metadata, validations)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def format_value(v: Optional[float]) -> str:
    if v is None or not math.isfinite(v):
        return INFEASIBLE
    return format(v, "#.7g")


def emit(t: ResultTable, fmt: str = "csv") -> str:
    """CSV or markdown; column order is ``n`` then the scenario's methods."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", *t.methods])
        for n, cells in t.rows:
            w.writerow([n, *(format_value(cells[m].value) for m in t.methods)])
        return buf.getvalue()
    if fmt == "markdown":
        notes: list[str] = []
        lines = ["| n | " + " | ".join(t.methods) + " |", "|---|" + "---|" * len(t.methods)]
        for n, cells in t.rows:
            out = []
            for m in t.methods:
                c = cells[m]
                if c.feasible:
                    out.append(format_value(c.value))
                else:
                    notes.append(f"n={n}, {m}: {c.note}")
                    out.append(f"{INFEASIBLE}[^{len(notes)}]")
            lines.append(f"| {n} | " + " | ".join(out) + " |")
        text = "\n".join(lines) + "\n"
        if notes:
            text += "\n" + "\n".join(f"[^{i}]: {note}" for i, note in enumerate(notes, 1)) + "\n"
        return text
    raise ValueError(f"unknown format {fmt!r}")

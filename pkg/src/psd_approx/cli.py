"""``psd-approx`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .families import DomainError
from .poisson import DEFAULT_EPS
from .scenario import (
    FORMATS,
    ScenarioParseError,
    Scenario,
    bundled_scenario,
    emit,
    parse_scenario,
    run_scenario,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_VIOLATION = 4

log = logging.getLogger("psd_approx")


def _eps_from_env() -> float:
    raw = os.environ.get("PSD_APPROX_EPS")
    if not raw:
        return DEFAULT_EPS
    eps = float(raw)
    if not 0.0 < eps <= 1e-3:
        raise ValueError(f"PSD_APPROX_EPS must lie in (0, 1e-3], got {raw}")
    return eps


def _add_output_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default=None, help="output format (default: scenario's)")
    p.add_argument("--certify", action="store_true", help="check certified bounds against the exact oracle")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psd-approx",
        description="Poisson and negative binomial TV bounds for convolutions of power series distributions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    _add_output_options(run)
    for name in ("table2", "table3"):
        _add_output_options(sub.add_parser(name, help=f"run the bundled {name} scenario"))
    return parser


def _execute(s: Scenario, args: argparse.Namespace) -> int:
    eps = _eps_from_env()
    table = run_scenario(s, eps=eps, certify_rows=args.certify)
    fmt = args.format or s.format
    text = emit(table, fmt)
    out = args.out or (s.output if s.output != "-" else None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)
    if args.certify:
        for v in table.validations:
            for note in v.skipped:
                log.warning("%s: %s", v.summary, note)
        for c in table.violations:
            print(
                f"VIOLATION {c.method} -> {c.target}: bound {c.bound:.7g} < oracle TV {c.oracle_tv:.7g}",
                file=sys.stderr,
            )
        if table.violations:
            return EXIT_VIOLATION
    if table.all_infeasible():
        return EXIT_INFEASIBLE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            s = parse_scenario(args.scenario)
        else:
            s = bundled_scenario(args.command)
    except (ScenarioParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return _execute(s, args)


if __name__ == "__main__":
    sys.exit(main())

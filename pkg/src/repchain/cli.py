"""Command line interface.

    repchain run <config.yaml> [--figures]
    repchain compare <a.csv> <b.csv> --tol rate=3ci[,col=1e-9rel,...]
    repchain version

Exit codes: 0 success / within tolerance, 1 configuration or usage error
(unparseable config, schema mismatch), 2 numerical failure (state-space cap
exceeded, solver failure, tolerance deviations).
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .ctmc import StateSpaceCapError, StationarySolveError
from .experiments import (
    compare_results,
    load_experiment,
    parse_tolerances,
    run_experiment,
)
from .model import ValidationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repchain",
        description="Entanglement distribution over repeater chains: "
        "closed forms, exact small-chain solves and event-driven simulation.",
    )
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="execute an experiment config and write its CSV")
    run_p.add_argument("config", help="path to a YAML experiment file")
    run_p.add_argument(
        "--figures",
        action="store_true",
        help="also render a PNG figure next to the CSV output",
    )

    cmp_p = sub.add_parser("compare", help="compare two result CSVs under tolerances")
    cmp_p.add_argument("a")
    cmp_p.add_argument("b")
    cmp_p.add_argument(
        "--tol",
        required=True,
        help="comma list of column=value tolerances; suffix 'rel' for relative, "
        "'ci' for multiples of the column's _ci companion (e.g. rate=3ci)",
    )
    cmp_p.add_argument("--quiet", action="store_true", help="only print the verdict")

    sub.add_parser("version", help="print the tool version")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "version":
        print(f"repchain {__version__}")
        return 0
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    parser.print_help()
    return 1


def _cmd_run(args) -> int:
    try:
        exp = load_experiment(args.config)
        if args.figures:
            exp.figures = True
        path = run_experiment(exp)
    except (ValidationError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (StateSpaceCapError, StationarySolveError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def _cmd_compare(args) -> int:
    try:
        tolerances = parse_tolerances(args.tol)
        report = compare_results(args.a, args.b, tolerances)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        for line in report.lines:
            print(line)
    print("OK" if report.ok else "DEVIATIONS FOUND")
    return 0 if report.ok else 2


if __name__ == "__main__":
    sys.exit(main())

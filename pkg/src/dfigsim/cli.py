"""Command line front end: simulate, verify, plot.

Exit codes: 0 success, 1 validation failure (bad scenario, bad file,
failed verification), 2 runtime abort (diverged simulation, solver
failure).
"""

import argparse
import logging
import os
import sys

from . import scenario_io, verify
from .errors import (ConfigError, DfigError, DomainError, NonFinite,
                     ParseError, ValidationError)

_VALIDATION_ERRORS = (ParseError, ValidationError, ConfigError, DomainError)


def _cmd_simulate(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        sc = scenario_io.parse_scenario(fh.read())
    log = scenario_io.run(sc, wind_csv=args.wind)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "results.csv")
    scenario_io.write_results(log, out_path)
    print(f"wrote {len(log)} rows to {out_path}")
    return 0


def _cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    all_passed = True
    for name in names:
        result = verify.SUITES[name]()
        all_passed &= result.passed
        status = "pass" if result.passed else "FAIL"
        print(f"[{status}] suite {result.name}", file=sys.stderr)
        for line in result.lines:
            print(f"    {line}", file=sys.stderr)
        for line in result.csv:
            print(line)
    return 0 if all_passed else 1


def _cmd_plot(args) -> int:
    log = scenario_io.read_results(args.log)
    paths = scenario_io.emit_plots(log, args.out)
    print("\n".join(paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfigsim",
        description="DFIG wind turbine closed-loop simulator and verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("--scenario", required=True, help="scenario file path")
    sim.add_argument("--wind", default=None, help="wind CSV overriding the scenario")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="run the stability/identity suites")
    ver.add_argument("--suite", default="all",
                     choices=["all", *verify.SUITES.keys()])
    ver.set_defaults(func=_cmd_verify)

    plot = sub.add_parser("plot", help="render SVG plots from a results CSV")
    plot.add_argument("--log", required=True, help="results CSV path")
    plot.add_argument("--out", required=True, help="output directory")
    plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFinite, DfigError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

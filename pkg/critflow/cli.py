"""
Command line entry point.

    critflow simulate run.yaml [--resume CHECKPOINT] [--set mu=2]
    critflow verify-theorem run.yaml
    critflow bkm run.yaml
    critflow cauchy-sweep run.yaml [--lambdas 0.5 0.25 0.125]
    critflow counterexample --J 1 2 4 8

Exit codes: 0 all applicable monitors hold, 1 a monitor failed, 2 bad
configuration, 3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from .config import ConfigError, load_config
from .data import RadialProfile
from .experiment import (
    BKM_BATTERY,
    EXIT_CONFIG,
    THEOREM_BATTERY,
    RunResult,
    run_cauchy_sweep,
    run_counterexample,
    run_simulation,
)
from .state import CheckpointError
from .utils import render

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _configure_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critflow",
        description="Periodic Navier-Stokes runs with X^{-1} a priori estimate monitors.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")

    commands = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help)
        sub.add_argument("config", type=Path, help="YAML or flat key = value config file")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (dotted keys allowed)",
        )
        return sub

    sim = with_config("simulate", "run a simulation with the configured monitors")
    sim.add_argument("--resume", type=Path, help="continue from a checkpoint")

    with_config("verify-theorem", "run with the uniform-estimate monitor battery")
    with_config("bkm", "run with the vorticity continuation monitors")

    sweep = with_config("cauchy-sweep", "compare runs of mollified data")
    sweep.add_argument("--lambdas", type=float, nargs="+", help="mollification scales")

    ce = commands.add_parser("counterexample", help="tabulate the H^{1/2} counterexample")
    ce.add_argument("--J", dest="J", type=int, nargs="+", required=True, help="ascending truncations")
    ce.add_argument("--inner", type=float, default=1.0, help="profile inner radius")
    ce.add_argument("--outer", type=float, default=2.0, help="profile outer radius")
    ce.add_argument("--amplitude", type=float, default=1.0, help="profile amplitude")
    ce.add_argument("--out", type=Path, default=Path("runs/counterexample"), help="output directory")

    return parser


def _dispatch(args: argparse.Namespace) -> RunResult:
    if args.command == "counterexample":
        try:
            profile = RadialProfile(inner=args.inner, outer=args.outer, amplitude=args.amplitude)
        except ValueError as e:
            raise ConfigError(f"profile: {e}") from e
        return run_counterexample(args.J, args.out, profile)

    config = load_config(args.config, args.overrides)

    match args.command:
        case "simulate":
            return run_simulation(config, resume=args.resume)
        case "verify-theorem":
            return run_simulation(config, monitors=THEOREM_BATTERY, command="verify-theorem")
        case "bkm":
            if config.subcritical:
                logger.warning("bkm run uses subcritical data; the bounds are checked anyway")
            return run_simulation(config, monitors=BKM_BATTERY, command="bkm")
        case "cauchy-sweep":
            return run_cauchy_sweep(config, args.lambdas)

    raise ValueError(f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None, output_fn: Callable[[str], None] | None = None) -> int:
    """
    Runs the CLI and returns its exit code.

    Args:
        argv: Arguments without the program name; defaults to `sys.argv[1:]`.
        output_fn: Receives the rendered results; defaults to `print`.
    """
    output_fn = output_fn or print
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    try:
        result = _dispatch(args)
    except (ConfigError, CheckpointError) as e:
        print(f"critflow: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        logger.debug("run rejected its inputs", exc_info=True)
        print(f"critflow: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if result.table:
        output_fn(result.table)

    for verdict in result.verdicts:
        output_fn(render(verdict, title=verdict.name))

    return result.exit_code


if __name__ == "__main__":
    raise SystemExit(main())

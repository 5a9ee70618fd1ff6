"""Command-line entry point: ``pulselock <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, parse_config
from .output import render
from .parallel import default_threads
from .runner import COMMANDS, run

HELP = {
    "pulse": "single-pulse Q, phase and W over areas and detunings",
    "steady-state": "post-pulse steady-state spin vs. precession frequency",
    "trace": "ensemble pump-probe trace vs. delay",
    "spectra": "positive-delay rotation/ellipticity vs. probe detuning",
    "nuclear-evolve": "time evolution of the nuclear polarization distribution",
    "nuclear-dos": "stationary density of precession frequencies",
    "selftest": "analytic and oracle consistency checks",
}


def _threads(text: str) -> int:
    if text == "max":
        return default_threads()
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'max'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'max'")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file (all keys optional)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key; repeatable")
    common.add_argument("--out", default="-", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=_threads, default=default_threads(),
                        help="worker threads, or 'max' (default: all cores)")

    parser = argparse.ArgumentParser(prog="pulselock", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"pulselock: config error: {exc}", file=sys.stderr)
        return 2
    try:
        table = run(args.command, cfg, args.threads)
    except Exception as exc:
        print(f"pulselock {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = render(table, cfg, args.format)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    if args.command == "selftest" and not table.meta.get("all_passed", False):
        print("pulselock selftest: some checks failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

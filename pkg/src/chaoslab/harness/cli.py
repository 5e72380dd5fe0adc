"""Command line entry point.

    chaoslab <simulate|solve-pde|chaos-study|lde-audit|enumerate>
             [--config PATH] [--out DIR] [--seed U64]

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 budget refusal.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import (BudgetExceeded, CancellationFailure, ConfigError, ConstraintViolation,
                      DomainError, NumericalBlowup, UndersampledError)
from .config import parse_config
from .run import execute

COMMANDS = {"simulate": "simulate", "solve-pde": "solve_pde", "chaos-study": "chaos_study",
            "lde-audit": "lde_audit", "enumerate": "enumerate"}
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
NUMERIC = (NumericalBlowup, DomainError, CancellationFailure, UndersampledError,
           OverflowError, FloatingPointError)


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="chaoslab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file (defaults used when omitted)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = COMMANDS[args.command]
    try:
        text = "{}"
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, kind=kind).with_overrides(seed=args.seed, output=args.out)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = execute(cfg)
    except BudgetExceeded as exc:
        print(f"budget refusal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConstraintViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in manifest.files:
        print(f["path"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

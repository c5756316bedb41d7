"""Command-line entry point.

    hybridsizer <simulate|train|co-optimize|compare|report> --config PATH
                [--seed N] [--workers N] [--out DIR] [--resume]

Exit codes: 0 success, 2 configuration error, 3 runtime failure. The
output directory comes from ``--out``, else ``$HYBRIDSIZER_OUT``, else
``results/<command>``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .config import COMMANDS, ConfigError, ExperimentConfig
from .runner import ReportError, emit_report, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "HYBRIDSIZER_OUT"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridsizer", description="PV-battery sizing and bidding experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="experiment YAML file (not needed for report)")
    p.add_argument("--seed", type=int, help="master seed, overrides the config")
    p.add_argument("--workers", type=int, default=1, help="rollout processes (does not change results)")
    p.add_argument("--out", help="results directory")
    p.add_argument("--resume", action="store_true", help="continue training from the checkpoint in --out")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    out = args.out or os.environ.get(OUT_ENV) or os.path.join("results", args.command)

    if args.command == "report":
        try:
            for f in emit_report(out):
                print(f)
        except ReportError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        if not args.config:
            raise ConfigError(["--config is required"])
        if args.workers < 1:
            raise ConfigError(["--workers must be >= 1"])
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
            cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        run_experiment(cfg, args.command, out, args.workers, args.resume)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # reported with the FAILED marker already written
        logging.getLogger("hybridsizer").debug("run failed", exc_info=True)
        print(f"error: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

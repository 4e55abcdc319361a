"""Command-line entry point: ``qcopula <subcommand> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], type=_override,
                        metavar="KEY=VALUE", help="override a config key, e.g. ansatz.m=3")
    common.add_argument("--output", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="BLAS / OpenMP thread count")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qcopula", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="load prices, align, standardize, split")
    p.add_argument("--seed", type=int, help="train/test split seed")
    sub.add_parser("fit-classical", parents=[common], help="fit t marginals and the t-copula")
    p = sub.add_parser("train", parents=[common], help="train the QCBM")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--resume", action="store_true", help="continue from the saved checkpoint")
    p.add_argument("--stop-after", type=int, help="halt after this many total SPSA steps")
    p = sub.add_parser("sample", parents=[common], help="generate model samples")
    p.add_argument("--count", type=int, help="number of generated trials")
    p.add_argument("--seed", type=int, help="sampling seed")
    sub.add_parser("evaluate", parents=[common], help="correlators and VaR/ES backtests")
    sub.add_parser("report", parents=[common], help="print a run summary")
    sub.add_parser("run", parents=[common], help="every step, expanding any grid section")
    return parser


SEED_KEYS = {"ingest": "split.seed", "train": "training.seed", "sample": "evaluation.seed"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    # numpy/scipy are imported only after the thread variables are set
    from . import pipeline
    from .errors import ConfigError, DataError, NumericError

    try:
        overrides = list(args.overrides)
        if args.output:
            overrides.append(("output", args.output))
        if getattr(args, "seed", None) is not None:
            overrides.append((SEED_KEYS[args.command], args.seed))
        cfg = pipeline.RunConfig.load(args.config, overrides)

        if args.command == "report":
            print(pipeline.cmd_report(cfg))
        elif args.command == "run":
            pipeline.run_all(cfg)
        elif args.command == "train":
            pipeline.run_step("train", cfg, resume=args.resume, stop_after=args.stop_after)
        elif args.command == "sample":
            pipeline.run_step("sample", cfg, count=args.count)
        else:
            pipeline.run_step(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

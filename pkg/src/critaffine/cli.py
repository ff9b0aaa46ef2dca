"""Command-line entry point.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures, 4 when an acceptance criterion fails.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .linalg_core import NumericalError
from .models import CalibrationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critaffine", description="Critical affine random walk experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None, help="override the config worker count")
    acc = sub.add_parser("acceptance", help="run the acceptance criteria")
    acc.add_argument("--seed", type=int, default=None)
    acc.add_argument("--quick", action="store_true", help="reduced budgets")
    acc.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    acc.add_argument("--workers", type=int, default=1)
    acc.add_argument("--json", action="store_true", help="print results as JSON")
    sub.add_parser("list-experiments", help="list experiment names")
    sub.add_parser("print-schema", help="print the config schema as JSON")
    return p


def _run(args) -> int:
    cfg = experiments.load_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise experiments.ConfigError("workers must be a positive integer")
        cfg.workers = args.workers
    report = experiments.run(cfg)
    out = experiments.output_dir_for(cfg)
    print(f"wrote {out / 'report.json'}")
    if cfg.experiment == "acceptance_all":
        for c in report["criteria"]:
            print(f"criterion {c['number']:2d} {'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
        return EXIT_OK if report["all_passed"] else EXIT_ACCEPTANCE
    return EXIT_OK


def _acceptance(args) -> int:
    from .acceptance import CRITERIA, DEFAULT_SEED, run_acceptance
    seed = DEFAULT_SEED if args.seed is None else args.seed
    try:
        seed = experiments.check_seed(seed)
    except ValueError as exc:
        raise experiments.ConfigError(str(exc)) from None
    if args.workers < 1:
        raise experiments.ConfigError("workers must be a positive integer")
    if args.only is not None:
        bad = sorted(set(args.only) - set(CRITERIA))
        if bad:
            raise experiments.ConfigError(f"unknown criteria {bad}")
    echo = None if args.json else lambda line: print(line, flush=True)
    results = run_acceptance(seed, quick=args.quick, workers=args.workers, only=args.only, echo=echo)
    if args.json:
        print(json.dumps(experiments._clean([r.to_dict() for r in results]), indent=2, sort_keys=True))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "acceptance":
            return _acceptance(args)
        if args.command == "list-experiments":
            for name in experiments.EXPERIMENTS:
                print(name)
            return EXIT_OK
        if args.command == "print-schema":
            print(json.dumps(experiments.config_schema(), indent=2, sort_keys=True))
            return EXIT_OK
    except experiments.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CalibrationError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Verbs:
    run <config-file>       validate, then execute the experiment
    validate <config-file>  check a config and report every violation
    list-experiments        print the known experiment ids

Exit codes: 0 success, 2 config error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigValidationError, DivergenceError
from .experiments import EXPERIMENT_IDS, run_experiment, validate_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contrastlab",
        description="Seeded contrastive-learning experiments on synthetic paired data.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--threads", type=int, default=None, help="trial-level parallelism")

    val_p = sub.add_parser("validate", help="validate a config file")
    val_p.add_argument("config", help="path to a JSON experiment config")

    sub.add_parser("list-experiments", help="print the known experiment ids")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.verb == "list-experiments":
        for eid in EXPERIMENT_IDS:
            print(eid)
        return EXIT_OK

    try:
        config = validate_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    if args.verb == "validate":
        print(f"valid: {config.experiment_id} (seed {config.seed})")
        return EXIT_OK

    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    if args.threads is not None:
        config = replace(config, threads=max(1, args.threads))

    try:
        manifest = run_experiment(config)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"wrote {len(manifest.files)} files to {config.output_dir}")
    print(f"config hash: {manifest.config_hash}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

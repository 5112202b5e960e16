#!/usr/bin/env python3
"""
Run a desk-scale LaSRO stage using Prefect.

The experiment is a chain of subcommands, each reading the artifacts the
previous one left in <run_dir>/seed_<s>/:
1. train-teacher:   DDPM teacher on the toy conditional dataset
2. distill:         consistency-distilled two-step student
3. pretrain-reward: surrogate reward pre-trained on mined W/L pairs
4. finetune:        student fine-tuned with one method (lasro or a baseline)
5. analyze:         one diagnostic probe (lipschitz, td, diversity, fidelity)
6. report:          tradeoff tables, metrics summary and figure

Usage:
    python run_lasro.py SUBCOMMAND --config CONFIG [--seed S] [--run-dir DIR]

Examples:
    # Full smoke chain in runs/smoke
    python run_lasro.py train-teacher --config configs/smoke.json --run-dir runs/smoke
    python run_lasro.py distill --config configs/smoke.json --run-dir runs/smoke
    python run_lasro.py pretrain-reward --config configs/smoke.json --run-dir runs/smoke
    python run_lasro.py finetune --method lasro --config configs/smoke.json --run-dir runs/smoke
    python run_lasro.py analyze --probe lipschitz --config configs/smoke.json --run-dir runs/smoke
    python run_lasro.py report --config configs/smoke.json --run-dir runs/smoke

Exit status: 0 success, 1 failure, 2 bad usage, bad config or missing prerequisite.
"""

import argparse
import logging
import os
import sys

from src.cfg.config import ENV_RUN_DIR, parse_config
from src.orchestration.lasro_flows import EXIT_FAILURE, EXIT_USAGE, run
from src.pipelines.lasro_stages import ANALYZE_PROBES
from src.utils.errors import ConfigValidationError
from src.utils.state import FINETUNE_METHODS

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

SUBCOMMANDS = ("train-teacher", "distill", "pretrain-reward", "finetune", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Desk-scale LaSRO experiments with Prefect")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=f"Run the {name} stage")
        sub.add_argument("--config", type=str, required=True, help="Path to the JSON run config")
        sub.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Run a single seed (default: every seed in the config)",
        )
        sub.add_argument(
            "--run-dir",
            type=str,
            default=os.environ.get(ENV_RUN_DIR),
            help=f"Run directory (default: ${ENV_RUN_DIR} or io.run_dir from the config)",
        )
        if name == "finetune":
            sub.add_argument("--method", choices=FINETUNE_METHODS, required=True, help="Fine-tuning method")
        if name == "analyze":
            sub.add_argument("--probe", choices=ANALYZE_PROBES, required=True, help="Diagnostic probe")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the LaSRO subcommands."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0

    seeds = [args.seed] if args.seed is not None else None
    try:
        cfg = parse_config(args.config)
        run_dir = args.run_dir or cfg.io.run_dir
        cfg = parse_config(args.config, run_dir=run_dir, seeds=seeds)
    except ConfigValidationError as e:
        logger.error(f"Invalid config {args.config}: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"Cannot read config {args.config}: {e}")
        return EXIT_USAGE

    try:
        logger.info(f"Starting {args.subcommand} in {run_dir}")
        return run(
            args.subcommand,
            cfg,
            run_dir=run_dir,
            seeds=seeds,
            method=getattr(args, "method", None),
            probe=getattr(args, "probe", None),
        )
    except Exception as e:
        logger.error(f"Flow execution failed: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""
Prefect flows, one per subcommand.

Each flow runs its stage once per configured seed, sequentially, in
<run_dir>/seed_<s>/. Tasks receive plain JSON-able arguments and return
status dictionaries; `run` folds them into a process exit status.
"""

import logging
from pathlib import Path
from typing import Any

from prefect import flow, task

from ..cfg.config import RunConfig, apply_overrides, validate_config
from ..pipelines.lasro_stages import run_stage, seed_dir
from ..utils.errors import ConfigValidationError, PreconditionError

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


@task(name="run_stage", log_prints=True)
def run_stage_task(
    subcommand: str,
    config: dict[str, Any],
    directory: str,
    seed: int,
    method: str | None = None,
    probe: str | None = None,
) -> dict[str, Any]:
    """
    Prefect task running one stage for one seed.

    Args:
        subcommand: Stage name
        config: Effective run config as a JSON-able dict
        directory: Seed directory
        seed: Seed for this unit of work
        method: Fine-tuning method (finetune only)
        probe: Diagnostic probe (analyze only)

    Returns:
        Dictionary with execution results
    """
    cfg = validate_config(config)
    logger.info(f"Running {subcommand} for seed {seed} in {directory}")
    try:
        summary = run_stage(subcommand, cfg, directory, seed, method=method, probe=probe)
    except PreconditionError as e:
        logger.error(f"{subcommand} (seed {seed}) cannot start: {e}")
        return {"seed": seed, "status": "precondition", "artifact": e.artifact, "error": str(e)}
    except Exception as e:
        logger.error(f"{subcommand} (seed {seed}) failed: {e}", exc_info=True)
        return {"seed": seed, "status": "failed", "error": str(e)}
    return {"seed": seed, "status": "success", **summary}


def _run_seeds(
    subcommand: str,
    config: dict[str, Any],
    run_dir: str,
    seeds: list[int],
    method: str | None = None,
    probe: str | None = None,
) -> dict[str, Any]:
    results = [
        run_stage_task(subcommand, config, str(seed_dir(run_dir, seed)), seed, method=method, probe=probe)
        for seed in seeds
    ]
    statuses = {r.get("status") for r in results}
    if statuses == {"success"}:
        status = "success"
    elif "precondition" in statuses:
        status = "precondition"
    else:
        status = "failed"

    successful = [r for r in results if r.get("status") == "success"]
    logger.info(f"{subcommand} completed: {len(successful)}/{len(seeds)} seeds successful")
    return {
        "subcommand": subcommand,
        "status": status,
        "total_seeds": len(seeds),
        "successful": len(successful),
        "results": results,
    }


@flow(name="lasro-train-teacher", description="Train the DDPM teacher on the toy dataset", log_prints=True)
def train_teacher_flow(config: dict[str, Any], run_dir: str, seeds: list[int]) -> dict[str, Any]:
    return _run_seeds("train-teacher", config, run_dir, seeds)


@flow(name="lasro-distill", description="Consistency-distill the teacher into the student", log_prints=True)
def distill_flow(config: dict[str, Any], run_dir: str, seeds: list[int]) -> dict[str, Any]:
    return _run_seeds("distill", config, run_dir, seeds)


@flow(name="lasro-pretrain-reward", description="Pre-train the surrogate reward", log_prints=True)
def pretrain_reward_flow(config: dict[str, Any], run_dir: str, seeds: list[int]) -> dict[str, Any]:
    return _run_seeds("pretrain-reward", config, run_dir, seeds)


@flow(name="lasro-finetune", description="Fine-tune the two-step student with one method", log_prints=True)
def finetune_flow(config: dict[str, Any], run_dir: str, seeds: list[int], method: str) -> dict[str, Any]:
    return _run_seeds("finetune", config, run_dir, seeds, method=method)


@flow(name="lasro-analyze", description="Run a diagnostic probe on the distilled student", log_prints=True)
def analyze_flow(config: dict[str, Any], run_dir: str, seeds: list[int], probe: str) -> dict[str, Any]:
    return _run_seeds("analyze", config, run_dir, seeds, probe=probe)


@flow(name="lasro-report", description="Tradeoff tables, metrics summary and figure", log_prints=True)
def report_flow(config: dict[str, Any], run_dir: str, seeds: list[int]) -> dict[str, Any]:
    return _run_seeds("report", config, run_dir, seeds)


FLOWS = {
    "train-teacher": train_teacher_flow,
    "distill": distill_flow,
    "pretrain-reward": pretrain_reward_flow,
    "finetune": finetune_flow,
    "analyze": analyze_flow,
    "report": report_flow,
}


def exit_status(summary: dict[str, Any] | None) -> int:
    if summary is None:
        logger.error("Flow returned None")
        return EXIT_FAILURE
    status = summary.get("status")
    if status == "success":
        return EXIT_SUCCESS
    if status == "precondition":
        return EXIT_USAGE
    return EXIT_FAILURE


def run(
    subcommand: str,
    cfg: RunConfig,
    run_dir: str | Path | None = None,
    seeds: list[int] | None = None,
    method: str | None = None,
    probe: str | None = None,
) -> int:
    """
    Execute a subcommand for every seed and return the process exit status.

    Args:
        subcommand: train-teacher, distill, pretrain-reward, finetune, analyze or report
        cfg: Validated run config
        run_dir: Overrides cfg.io.run_dir
        seeds: Overrides cfg.seeds
        method: Fine-tuning method (finetune)
        probe: Diagnostic probe (analyze)

    Returns:
        0 on success, 1 on failure, 2 on a missing prerequisite or bad usage
    """
    if subcommand not in FLOWS:
        logger.error(f"Unknown subcommand: {subcommand}")
        return EXIT_USAGE
    if subcommand == "finetune" and method is None:
        logger.error("finetune requires --method")
        return EXIT_USAGE
    if subcommand == "analyze" and probe is None:
        logger.error("analyze requires --probe")
        return EXIT_USAGE

    try:
        cfg = apply_overrides(cfg, run_dir=run_dir, seeds=seeds)
        config = validate_config(cfg.model_dump(mode="json")).model_dump(mode="json")
    except ConfigValidationError as e:
        logger.error(f"Invalid config: {e}")
        return EXIT_USAGE

    run_dir, seeds = cfg.io.run_dir, list(cfg.seeds)
    kwargs: dict[str, Any] = {"config": config, "run_dir": run_dir, "seeds": seeds}
    if subcommand == "finetune":
        kwargs["method"] = method
    if subcommand == "analyze":
        kwargs["probe"] = probe

    summary = FLOWS[subcommand](**kwargs)
    logger.info(f"Summary: {summary.get('status')} ({summary.get('successful')}/{summary.get('total_seeds')} seeds)")
    return exit_status(summary)

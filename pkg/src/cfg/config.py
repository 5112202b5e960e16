"""
Configuration for desk-scale LaSRO runs.

Module-level constants hold the defaults; `RunConfig` is the validated JSON
document every subcommand consumes. Unknown keys and type mismatches are
rejected with the dotted path of the offending key.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Literal

import torch
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..utils.errors import ConfigValidationError

logger = logging.getLogger(__name__)

# Every tensor and network in the package uses double precision
DTYPE = torch.float64

SCHEMA_VERSION = 1

# Environment variable consulted for the default --run-dir
ENV_RUN_DIR = "LASRO_RUN_DIR"
DEFAULT_RUN_DIR = "runs/default"

EFFECTIVE_CONFIG_FILE = "effective_config.json"

# Hex digits of the config digest used in run ids
RUN_ID_DIGEST_LENGTH = 12

# Schedule: T=1000 reference betas 1e-4..0.02 scaled by 1000/T for T=100
DEFAULT_T = 100
DEFAULT_BETA_MIN = 1e-3
DEFAULT_BETA_MAX = 0.2

# Distillation skip on the T=100 grid
DEFAULT_SKIP = 10

# Loss coefficients at desk scale
DESK_LOSS_COEFFICIENTS = {"c": 1.0, "c1": 0.5, "c2": 1.0}

# Alternation step counts per reward family
CONTINUOUS_REWARD_ALTERNATION = (1, 1)
QUANTIZED_REWARD_ALTERNATION = (10, 20)

# Local Lipschitz levels on T=1000 (20, 50, 100, 200, 500) mapped onto T=100
DEFAULT_LIPSCHITZ_LEVELS = [2, 5, 10, 20, 50]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class DatasetConfig(_Section):
    kind: Literal["mixture", "spiral", "checkerboard"] = "mixture"
    d: int = Field(default=2, ge=2, le=16)
    C: int = Field(default=8, ge=1)
    seed: int = 0
    n_reference: int = Field(default=2000, ge=1)


class ScheduleConfig(_Section):
    T: int = Field(default=DEFAULT_T, ge=1)
    kind: Literal["linear"] = "linear"
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX


class TeacherConfig(_Section):
    width: int = Field(default=128, ge=1)
    depth: int = Field(default=3, ge=1)
    embed_dim: int = Field(default=32, ge=2)
    iters: int = Field(default=3000, ge=0)
    batch_size: int = Field(default=256, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    sample_steps: int = Field(default=50, ge=1)


class DistillConfig(_Section):
    skip: int = Field(default=DEFAULT_SKIP, ge=1)
    iters: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=256, ge=1)
    lr: float = Field(default=2e-4, gt=0)
    target_mu: float = Field(default=0.95, ge=0, le=1)
    sigma_data: float = Field(default=0.5, gt=0)
    timestep_scaling: float = Field(default=10.0, gt=0)
    mid_timestep: int | None = None


class RewardConfig(_Section):
    kind: Literal["target_region", "quantized", "classifier"] = "target_region"
    targets: list[list[float]] | None = None
    target_offset: float = 1.5
    levels: int = Field(default=4, ge=1)
    radius: float = Field(default=3.0, gt=0)
    classifier_path: str | None = None
    classifier_hidden: int = Field(default=64, ge=1)
    classifier_samples: int = Field(default=4000, ge=1)


class SurrogateConfig(_Section):
    head_width: int = Field(default=64, ge=1)
    fresh_backbone: bool = False
    scorer_timestep: int = Field(default=0, ge=0)
    init_from: str | None = None
    pretrain_iters: int = Field(default=2000, ge=0)
    holdout_pairs: int = Field(default=256, ge=1)


class TrainConfig(_Section):
    N_s: int = Field(default=4, ge=2)
    N1: int | None = Field(default=None, ge=0)
    N2: int | None = Field(default=None, ge=0)
    c: float = Field(default=DESK_LOSS_COEFFICIENTS["c"], ge=0)
    c1: float = Field(default=DESK_LOSS_COEFFICIENTS["c1"], ge=0)
    c2: float = Field(default=DESK_LOSS_COEFFICIENTS["c2"], ge=0)
    eta: float = Field(default=1e-3, gt=0)
    eta1: float = Field(default=1e-4, gt=0)
    eta2: float = Field(default=1e-4, gt=0)
    mu: float = Field(default=0.95, ge=0, le=1)
    optimizer: Literal["adam", "sgd"] = "adam"
    stats_decay: float = Field(default=0.99, ge=0, lt=1)
    stats_window: int = Field(default=1024, ge=1)
    stats_floor: float = Field(default=1e-6, gt=0)
    outer_iters: int = Field(default=2000, ge=0)
    adapt_batch_size: int = Field(default=16, ge=1)
    buffer_capacity: int = Field(default=4096, ge=2)
    distill_batch_size: int = Field(default=64, ge=1)
    checkpoint_every: int = Field(default=400, ge=1)
    eval_samples: int = Field(default=256, ge=1)
    rwr_temperature: float = Field(default=0.1, gt=0)
    ddpo_degenerate: bool = True
    direct_normalize: bool = False


class AnalyzeConfig(_Section):
    t_levels: list[int] = Field(default_factory=lambda: list(DEFAULT_LIPSCHITZ_LEVELS))
    epsilon: float = Field(default=0.01, gt=0, lt=1)
    N: int = Field(default=1000, ge=100)
    draws: int = Field(default=1000, ge=2)
    H_list: list[Literal[1, 2, 4, 8]] = Field(default_factory=lambda: [1, 2, 4, 8])
    projections: int = Field(default=128, ge=32)
    td_traces: int = Field(default=100, ge=1)
    td_gamma: float = Field(default=0.0, ge=0, le=1)
    fidelity_samples: int = Field(default=1000, ge=1)
    quality: Literal["density", "reward", "both"] = "both"


class IOConfig(_Section):
    run_dir: str = DEFAULT_RUN_DIR
    metrics_file: str = "metrics.jsonl"
    record_wall_time: bool = False


class RunConfig(_Section):
    schema_version: Literal[1]
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    teacher: TeacherConfig = Field(default_factory=TeacherConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    reward: RewardConfig = Field(default_factory=RewardConfig)
    surrogate: SurrogateConfig = Field(default_factory=SurrogateConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    analyze: AnalyzeConfig = Field(default_factory=AnalyzeConfig)
    io: IOConfig = Field(default_factory=IOConfig)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)

    @model_validator(mode="after")
    def _materialize_alternation(self) -> "RunConfig":
        """Fill N1/N2 from the reward family when the document leaves them unset."""
        n1, n2 = (
            QUANTIZED_REWARD_ALTERNATION
            if self.reward.kind == "quantized"
            else CONTINUOUS_REWARD_ALTERNATION
        )
        if self.train.N1 is None:
            self.train.N1 = n1
        if self.train.N2 is None:
            self.train.N2 = n2
        if self.distill.mid_timestep is None:
            self.distill.mid_timestep = max(self.schedule.T // 2, 1)
        if self.schedule.T >= 2 and not 0 < self.distill.mid_timestep < self.schedule.T:
            raise ValueError("distill.mid_timestep must lie strictly inside (0, T)")
        if self.distill.skip > self.schedule.T:
            raise ValueError("distill.skip must not exceed schedule.T")
        return self


def _error_path(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def validate_config(document: str | dict) -> RunConfig:
    """
    Validate a JSON document (string or already-decoded dict) into a RunConfig.

    Raises:
        ConfigValidationError: naming the dotted path of the first offending key
    """
    try:
        if isinstance(document, str):
            return RunConfig.model_validate_json(document)
        return RunConfig.model_validate_json(json.dumps(document))
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigValidationError(_error_path(first), first.get("msg", "invalid value")) from e


def emit_config(cfg: RunConfig) -> str:
    """Serialize a config with all defaults materialized."""
    return cfg.model_dump_json(indent=2)


def apply_overrides(
    cfg: RunConfig,
    run_dir: str | Path | None = None,
    seeds: list[int] | None = None,
) -> RunConfig:
    """Fold command-line overrides into the config so the echo is the config that runs."""
    update: dict = {}
    if run_dir is not None:
        update["io"] = cfg.io.model_copy(update={"run_dir": str(run_dir)})
    if seeds is not None:
        if not seeds:
            raise ConfigValidationError("seeds", "at least one seed is required")
        update["seeds"] = list(seeds)
    return cfg.model_copy(update=update) if update else cfg


def config_hash(cfg: RunConfig) -> str:
    """Digest of every setting that shapes results; io and seeds are excluded."""
    payload = cfg.model_dump_json(exclude={"io", "seeds"})
    return hashlib.sha256(payload.encode()).hexdigest()[:RUN_ID_DIGEST_LENGTH]


def make_run_id(cfg: RunConfig, seed: int) -> str:
    return f"{config_hash(cfg)}-seed{seed}"


def parse_config(
    path: str | Path,
    run_dir: str | Path | None = None,
    seeds: list[int] | None = None,
) -> RunConfig:
    """
    Read, validate and default-fill a run configuration.

    Args:
        path: JSON config file
        run_dir: When given, overrides io.run_dir and the effective config is echoed there
        seeds: When given, overrides the config's seed list

    Returns:
        Validated RunConfig with overrides applied

    Raises:
        ConfigValidationError: unknown key, type mismatch or missing field
        OSError: unreadable file
    """
    path = Path(path)
    logger.info(f"Parsing run config from {path}")
    cfg = apply_overrides(validate_config(path.read_text()), run_dir=run_dir, seeds=seeds)

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / EFFECTIVE_CONFIG_FILE).write_text(emit_config(cfg))
        logger.info(f"Effective config written to {run_dir / EFFECTIVE_CONFIG_FILE}")

    return cfg

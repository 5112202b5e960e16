"""
Pipeline stages, one per subcommand.

Every stage works inside a seed directory (<run_dir>/seed_<s>/): it checks
the checkpoints it builds on, rebuilds the models from the run config,
streams metrics to metrics.jsonl and writes its own checkpoints and reports.
"""

import logging
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import duckdb
import pandas as pd
import torch

from ..analysis.diversity import diversity_probe
from ..analysis.fidelity import fidelity_proxy
from ..analysis.lipschitz import density_quality, local_lipschitz, reward_quality
from ..analysis.td import td_equivalence_check
from ..analysis.tradeoff import evaluate_sampler, tradeoff_report
from ..baselines.runner import run_finetune
from ..cfg.config import RunConfig, make_run_id
from ..consistency.distill import DistillRegularizer, build_student, distill_student, frozen_copy
from ..consistency.model import ConsistencyModel
from ..consistency.sampling import cm_sample
from ..diffusion.datasets import ToyDataset, make_toy_dataset
from ..diffusion.ddpm import ddpm_sample, train_teacher
from ..diffusion.networks import DenoiserNet, build_denoiser
from ..diffusion.schedule import NoiseSchedule, make_schedule
from ..rewards.classifier import load_classifier, save_classifier, train_classifier
from ..rewards.signals import ClassifierReward, RewardSignal, make_reward
from ..rewards.surrogate import SurrogateReward, build_surrogate
from ..training.pretrain import make_holdout_pairs, pairwise_accuracy, pretrain_surrogate
from ..utils.checkpoints import CheckpointManifest, load_into, save_checkpoint
from ..utils.errors import InvalidArgumentError
from ..utils.metrics import MetricsSink
from ..utils.seeding import make_generator
from ..utils.state import (
    CHECKPOINT_DIR,
    CLASSIFIER,
    FINETUNE_METHODS,
    STUDENT,
    SURROGATE,
    TEACHER,
    checkpoint_path,
    report_path,
    require_artifacts,
    write_provenance,
)

logger = logging.getLogger(__name__)

ANALYZE_PROBES = ("lipschitz", "td", "diversity", "fidelity")

# Offsets keep the random streams of different stages apart for one seed
STAGE_SEEDS = {
    "train-teacher": 0,
    "distill": 1,
    "pretrain-reward": 2,
    "finetune": 3,
    "analyze": 4,
    "report": 5,
}


def package_version() -> str:
    try:
        return version("desk-lasro")
    except PackageNotFoundError:
        return "unknown"


def seed_dir(run_dir: str | Path, seed: int) -> Path:
    return Path(run_dir) / f"seed_{seed}"


@dataclass
class StageContext:
    """Everything a stage needs for one seed."""

    cfg: RunConfig
    seed_dir: Path
    seed: int
    run_id: str
    sink: MetricsSink

    @classmethod
    def open(cls, cfg: RunConfig, directory: str | Path, seed: int) -> "StageContext":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        sink = MetricsSink(directory / cfg.io.metrics_file, record_wall_time=cfg.io.record_wall_time)
        return cls(cfg=cfg, seed_dir=directory, seed=seed, run_id=make_run_id(cfg, seed), sink=sink)

    def stage_seed(self, stage: str) -> int:
        return 1000 * self.seed + STAGE_SEEDS[stage]

    def emit(self, method: str, stage: str, step: int, values: dict[str, Any]) -> None:
        self.sink.emit_many(self.run_id, method, stage, step, self.seed, values)

    def close(self) -> None:
        self.sink.close()


# --- model construction -----------------------------------------------------


def build_dataset(cfg: RunConfig) -> ToyDataset:
    d = cfg.dataset
    return make_toy_dataset(d.kind, d.d, d.C, d.seed)


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    s = cfg.schedule
    return make_schedule(s.T, s.kind, s.beta_min, s.beta_max)


def build_teacher(cfg: RunConfig, seed: int) -> DenoiserNet:
    t = cfg.teacher
    return build_denoiser(cfg.dataset.d, cfg.dataset.C, t.width, t.depth, t.embed_dim, seed)


def conditions_of(cfg: RunConfig) -> list[int]:
    return list(range(cfg.dataset.C))


def load_teacher(ctx: StageContext) -> DenoiserNet:
    teacher = build_teacher(ctx.cfg, ctx.seed)
    load_into(teacher, checkpoint_path(ctx.seed_dir, TEACHER), expected_module=TEACHER)
    teacher.requires_grad_(False)
    teacher.eval()
    return teacher


def load_student(ctx: StageContext, teacher: DenoiserNet, sched: NoiseSchedule, stem: str = STUDENT) -> ConsistencyModel:
    dcfg = ctx.cfg.distill
    student = build_student(teacher, sched, dcfg.sigma_data, dcfg.timestep_scaling)
    load_into(student, checkpoint_path(ctx.seed_dir, stem), expected_module=STUDENT)
    return student


def new_surrogate(cfg: RunConfig, teacher: DenoiserNet, seed: int) -> SurrogateReward:
    s = cfg.surrogate
    return build_surrogate(teacher, s.head_width, s.scorer_timestep, s.fresh_backbone, seed)


def load_surrogate(ctx: StageContext, teacher: DenoiserNet) -> SurrogateReward:
    R = new_surrogate(ctx.cfg, teacher, ctx.seed)
    load_into(R, checkpoint_path(ctx.seed_dir, SURROGATE), expected_module=SURROGATE)
    return R


def build_reward(ctx: StageContext, dataset: ToyDataset) -> RewardSignal:
    """Black-box reward; a toy classifier is trained once per seed directory and reused."""
    rcfg = ctx.cfg.reward
    if rcfg.kind == "classifier" and rcfg.classifier_path is None:
        path = checkpoint_path(ctx.seed_dir, CLASSIFIER)
        if path.exists():
            return ClassifierReward(load_classifier(path))
        model = train_classifier(dataset, rcfg.classifier_hidden, rcfg.classifier_samples, ctx.seed)
        save_classifier(model, path)
        return ClassifierReward(model)
    return make_reward(rcfg.kind, rcfg, ctx.seed, dataset)


def build_regularizer(
    cfg: RunConfig, teacher: DenoiserNet, student: ConsistencyModel, dataset: ToyDataset, sched: NoiseSchedule, batch_size: int
) -> DistillRegularizer:
    return DistillRegularizer(
        teacher=teacher,
        target=frozen_copy(student),
        dataset=dataset,
        sched=sched,
        skip=cfg.distill.skip,
        batch_size=batch_size,
        target_mu=cfg.distill.target_mu,
    )


def reference_data(cfg: RunConfig, dataset: ToyDataset, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    return dataset.sample_labeled(cfg.dataset.n_reference, seed)


def save_model(ctx: StageContext, model: torch.nn.Module, stem: str, module: str, step: int, ema: bool = False) -> Path:
    path = checkpoint_path(ctx.seed_dir, stem)
    save_checkpoint(model, CheckpointManifest(module=module, step=step, ema=ema), path)
    return path


# --- stages -----------------------------------------------------------------


def train_teacher_stage(ctx: StageContext) -> dict[str, Any]:
    cfg = ctx.cfg
    require_artifacts(ctx.seed_dir, "train-teacher")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = build_teacher(cfg, ctx.seed)

    def on_step(step: int, loss: float) -> None:
        ctx.emit("teacher", "train-teacher", step, {"loss_ddpm": loss})

    losses = train_teacher(
        teacher, dataset, sched, cfg.teacher.iters, cfg.teacher.batch_size, cfg.teacher.lr,
        ctx.stage_seed("train-teacher"), on_step=on_step,
    )
    save_model(ctx, teacher, TEACHER, TEACHER, cfg.teacher.iters)

    x_ref, c_ref = reference_data(cfg, dataset, ctx.stage_seed("report"))
    samples = ddpm_sample(teacher, c_ref, sched, cfg.teacher.sample_steps, ctx.stage_seed("train-teacher"), n=len(c_ref))
    fidelity = fidelity_proxy(samples, x_ref, cfg.analyze.projections, ctx.seed)
    ctx.emit("teacher", "train-teacher", cfg.teacher.iters, {"fidelity": fidelity})
    ctx.sink.flush()
    logger.info(f"Teacher trained: final loss={losses[-1] if losses else float('nan'):.4f}, fidelity={fidelity:.4f}")
    return {"final_loss": losses[-1] if losses else None, "fidelity": fidelity}


def distill_stage(ctx: StageContext) -> dict[str, Any]:
    cfg = ctx.cfg
    require_artifacts(ctx.seed_dir, "distill")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = load_teacher(ctx)
    student = build_student(teacher, sched, cfg.distill.sigma_data, cfg.distill.timestep_scaling)
    regularizer = build_regularizer(cfg, teacher, student, dataset, sched, cfg.distill.batch_size)

    def on_step(step: int, loss: float) -> None:
        ctx.emit("student", "distill", step, {"loss_lcm": loss})

    losses = distill_student(
        student, regularizer, cfg.distill.iters, cfg.distill.lr, ctx.stage_seed("distill"), on_step=on_step
    )
    save_model(ctx, student, STUDENT, STUDENT, cfg.distill.iters)

    x_ref, c_ref = reference_data(cfg, dataset, ctx.stage_seed("report"))
    one_step = cm_sample(student, c_ref, 1, ctx.stage_seed("distill")).final
    fidelity = fidelity_proxy(one_step, x_ref, cfg.analyze.projections, ctx.seed)
    ctx.emit("student", "distill", cfg.distill.iters, {"fidelity_1step": fidelity})
    ctx.sink.flush()
    return {"final_loss": losses[-1] if losses else None, "fidelity_1step": fidelity}


def pretrain_reward_stage(ctx: StageContext) -> dict[str, Any]:
    cfg = ctx.cfg
    require_artifacts(ctx.seed_dir, "pretrain-reward")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = load_teacher(ctx)
    student = load_student(ctx, teacher, sched)
    r = build_reward(ctx, dataset)
    R = new_surrogate(cfg, teacher, ctx.seed)
    if cfg.surrogate.init_from is not None:
        load_into(R, cfg.surrogate.init_from, expected_module=SURROGATE)
        logger.info(f"Surrogate warm-started from {cfg.surrogate.init_from}")

    conditions = conditions_of(cfg)
    holdout = make_holdout_pairs(
        student, r, conditions, cfg.surrogate.holdout_pairs, cfg.train.N_s,
        ctx.stage_seed("report"), cfg.distill.mid_timestep,
    )
    initial_acc = pairwise_accuracy(R, holdout)

    def on_step(step: int, metrics: dict) -> None:
        ctx.emit("lasro", "pretrain-reward", step, metrics)

    R, losses = pretrain_surrogate(
        cfg, student, R, r, conditions, cfg.surrogate.pretrain_iters,
        ctx.stage_seed("pretrain-reward"), holdout=holdout, on_step=on_step,
    )
    final_acc = pairwise_accuracy(R, holdout)
    save_model(ctx, R, SURROGATE, SURROGATE, cfg.surrogate.pretrain_iters)
    ctx.emit("lasro", "pretrain-reward", cfg.surrogate.pretrain_iters, {"holdout_acc": final_acc})
    ctx.sink.flush()
    logger.info(f"Surrogate holdout accuracy {initial_acc:.3f} -> {final_acc:.3f}")
    return {"holdout_acc_initial": initial_acc, "holdout_acc": final_acc, "updates": len(losses)}


def finetune_stem(method: str, step: int, ema: bool) -> str:
    return f"finetune_{method}_{step:06d}" + ("_ema" if ema else "")


def finetune_stage(ctx: StageContext, method: str) -> dict[str, Any]:
    """Fine-tune the distilled student with `method`; checkpoints feed the tradeoff report."""
    if method not in FINETUNE_METHODS:
        raise InvalidArgumentError(f"Unknown fine-tuning method: {method}")
    cfg = ctx.cfg
    require_artifacts(ctx.seed_dir, f"finetune:{method}")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = load_teacher(ctx)
    student = load_student(ctx, teacher, sched)
    r = build_reward(ctx, dataset)
    R = load_surrogate(ctx, teacher) if method in ("lasro", "altft") else None
    regularizer = build_regularizer(cfg, teacher, student, dataset, sched, cfg.train.distill_batch_size)
    conditions = conditions_of(cfg)
    x_ref, _ = reference_data(cfg, dataset, ctx.stage_seed("report"))
    eval_seed = ctx.stage_seed("report")

    def evaluate(model: ConsistencyModel, step: int, prefix: str) -> dict[str, float]:
        reward_1, reward_2, fidelity = evaluate_sampler(
            model, r, x_ref, conditions, cfg.train.eval_samples, eval_seed,
            cfg.analyze.projections, cfg.distill.mid_timestep,
        )
        values = {f"{prefix}_reward_1step": reward_1, f"{prefix}_reward_2step": reward_2, f"{prefix}_fidelity": fidelity}
        ctx.emit(method, "finetune-eval", step, values)
        return values

    baseline = evaluate(student, 0, "eval")
    save_model(ctx, student, finetune_stem(method, 0, False), STUDENT, 0)
    save_model(ctx, student, finetune_stem(method, 0, True), STUDENT, 0, ema=True)

    def on_step(step: int, metrics: dict) -> None:
        ctx.emit(method, "finetune", step, metrics)

    def on_checkpoint(step: int, f: ConsistencyModel, ema: ConsistencyModel) -> None:
        save_model(ctx, f, finetune_stem(method, step, False), STUDENT, step)
        save_model(ctx, ema, finetune_stem(method, step, True), STUDENT, step, ema=True)
        evaluate(ema, step, "eval")
        ctx.sink.flush()

    result = run_finetune(
        method, cfg, student, r, regularizer, conditions, cfg.train.outer_iters,
        ctx.stage_seed("finetune"), R=R, on_step=on_step, on_checkpoint=on_checkpoint,
    )
    final_step = cfg.train.outer_iters
    if final_step % cfg.train.checkpoint_every != 0:
        on_checkpoint(final_step, result.f, result.ema)
    if result.R is not None:
        save_model(ctx, result.R, f"{SURROGATE}_{method}", SURROGATE, final_step)
    final = evaluate(result.ema, final_step, "eval")
    ctx.emit(method, "finetune", final_step, result.budget.as_metrics())
    ctx.sink.flush()
    return {
        "method": method,
        "baseline_reward_2step": baseline["eval_reward_2step"],
        "final_reward_1step": final["eval_reward_1step"],
        "final_reward_2step": final["eval_reward_2step"],
        "final_fidelity": final["eval_fidelity"],
        **result.budget.as_metrics(),
    }


def analyze_stage(ctx: StageContext, probe: str) -> dict[str, Any]:
    """Run one diagnostic probe on the distilled student and write its CSV report."""
    if probe not in ANALYZE_PROBES:
        raise InvalidArgumentError(f"Unknown probe: {probe}")
    cfg, acfg = ctx.cfg, ctx.cfg.analyze
    require_artifacts(ctx.seed_dir, f"analyze:{probe}")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = load_teacher(ctx)
    student = load_student(ctx, teacher, sched)
    conditions = conditions_of(cfg)
    seed = ctx.stage_seed("analyze")

    if probe == "lipschitz":
        qualities = []
        if acfg.quality in ("density", "both") and dataset.has_density:
            qualities.append(("density", density_quality(dataset)))
        if acfg.quality in ("reward", "both"):
            qualities.append(("reward", reward_quality(build_reward(ctx, dataset))))
        frames, summary = [], {}
        for name, quality in qualities:
            report = local_lipschitz(student, quality, acfg.t_levels, acfg.epsilon, acfg.N, conditions, seed, name=name)
            frames.append(report.to_frame())
            summary[f"spearman_{name}"] = report.spearman
            for t, estimate in zip(report.t_levels, report.estimates, strict=True):
                ctx.emit("student", "analyze-lipschitz", t, {f"lipschitz_{name}": estimate})
        df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
        name = "lipschitz_report.csv"

    elif probe == "td":
        r = build_reward(ctx, dataset)
        R = load_surrogate(ctx, teacher)
        generator = make_generator(seed)
        c = torch.as_tensor([conditions[i % len(conditions)] for i in range(acfg.td_traces)], dtype=torch.long)
        traces = cm_sample(student, c, 2, generator, mid_timestep=cfg.distill.mid_timestep)
        with torch.no_grad():
            report = td_equivalence_check(R, r, traces, acfg.td_gamma)
        df = report.to_frame()
        summary = {"max_abs_diff": report.max_abs_diff, "l_td": report.l_td}
        ctx.emit("lasro", "analyze-td", 0, summary)
        name = "td_report.csv"

    elif probe == "diversity":
        df = diversity_probe(student, conditions, acfg.H_list, acfg.draws, seed)
        for row in df.itertuples():
            ctx.emit("student", "analyze-diversity", int(row.H), {"variance": row.variance})
        summary = {f"variance_H{int(row.H)}": row.variance for row in df.itertuples()}
        name = "diversity_report.csv"

    else:
        x_ref, c_ref = dataset.sample_labeled(acfg.fidelity_samples, seed)
        generator = make_generator(seed + 1)
        samplers = {
            "teacher_ddpm": ddpm_sample(teacher, c_ref, sched, cfg.teacher.sample_steps, generator, n=len(c_ref)),
            "student_1step": cm_sample(student, c_ref, 1, generator).final,
            "student_2step": cm_sample(student, c_ref, 2, generator, mid_timestep=cfg.distill.mid_timestep).final,
        }
        reference, _ = dataset.sample_labeled(acfg.fidelity_samples, generator)
        rows = [
            {"sampler": key, "fidelity": fidelity_proxy(samples, reference, acfg.projections, seed)}
            for key, samples in samplers.items()
        ]
        rows.append({"sampler": "data", "fidelity": fidelity_proxy(x_ref, reference, acfg.projections, seed)})
        df = pd.DataFrame(rows)
        summary = {f"fidelity_{row['sampler']}": row["fidelity"] for row in rows}
        ctx.emit("student", "analyze-fidelity", 0, summary)
        name = "fidelity_report.csv"

    path = report_path(ctx.seed_dir, name)
    df.to_csv(path, index=False)
    ctx.sink.flush()
    logger.info(f"Wrote {path}")
    return {"probe": probe, "report": str(path), **summary}


def summarize_metrics(metrics_file: Path) -> pd.DataFrame:
    """Per (method, stage, name) aggregates of the metrics stream."""
    source = str(metrics_file).replace("'", "''")
    query = f"""
        SELECT method, stage, name,
               count(*) AS n,
               avg(value) AS mean,
               min(value) AS min,
               max(value) AS max,
               arg_max(value, step) AS last
        FROM read_json_auto('{source}')
        GROUP BY method, stage, name
        ORDER BY method, stage, name
    """
    with duckdb.connect() as con:
        return con.execute(query).df()


def plot_tradeoff(df: pd.DataFrame, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns

    fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=df, x="fidelity", y="reward_2step", hue="method", marker="o", sort=False, ax=ax)
    ax.set_xlabel("sliced Wasserstein to data (lower is better)")
    ax.set_ylabel("mean 2-step reward")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def report_stage(ctx: StageContext) -> dict[str, Any]:
    """Tradeoff tables per fine-tuned method, metrics summary and tradeoff figure."""
    cfg = ctx.cfg
    require_artifacts(ctx.seed_dir, "report")
    dataset, sched = build_dataset(cfg), build_schedule(cfg)
    teacher = load_teacher(ctx)
    student = load_student(ctx, teacher, sched)
    r = build_reward(ctx, dataset)
    x_ref, _ = reference_data(cfg, dataset, ctx.stage_seed("report"))
    ctx.sink.flush()

    tables = []
    for method in FINETUNE_METHODS:
        checkpoints = sorted((ctx.seed_dir / CHECKPOINT_DIR).glob(f"finetune_{method}_*_ema.joblib"))
        if len(checkpoints) < 2:
            continue
        df = tradeoff_report(
            checkpoints, student, r, x_ref, conditions_of(cfg), ctx.stage_seed("report"),
            samples=cfg.train.eval_samples, projections=cfg.analyze.projections,
            mid_timestep=cfg.distill.mid_timestep,
        )
        df.to_csv(report_path(ctx.seed_dir, f"tradeoff_{method}.csv"), index=False)
        tables.append(df.assign(method=method))

    summary_path = report_path(ctx.seed_dir, "summary.csv")
    summarize_metrics(ctx.seed_dir / cfg.io.metrics_file).to_csv(summary_path, index=False)

    figure = None
    if tables:
        combined = pd.concat(tables, ignore_index=True).dropna(subset=["fidelity", "reward_2step"])
        if not combined.empty:
            figure = report_path(ctx.seed_dir, "tradeoff.png")
            plot_tradeoff(combined, figure)
    logger.info(f"Report written for {len(tables)} fine-tuned methods")
    return {
        "methods": [t["method"].iloc[0] for t in tables],
        "summary": str(summary_path),
        "figure": str(figure) if figure else None,
    }


STAGES = {
    "train-teacher": train_teacher_stage,
    "distill": distill_stage,
    "pretrain-reward": pretrain_reward_stage,
    "finetune": finetune_stage,
    "analyze": analyze_stage,
    "report": report_stage,
}


def run_stage(
    subcommand: str,
    cfg: RunConfig,
    directory: str | Path,
    seed: int,
    method: str | None = None,
    probe: str | None = None,
) -> dict[str, Any]:
    """Open the seed directory, stamp provenance and run one stage."""
    if subcommand not in STAGES:
        raise InvalidArgumentError(f"Unknown subcommand: {subcommand}")
    ctx = StageContext.open(cfg, directory, seed)
    try:
        write_provenance(ctx.seed_dir, subcommand, package_version())
        if subcommand == "finetune":
            if method is None:
                raise InvalidArgumentError("finetune needs --method")
            return STAGES[subcommand](ctx, method)
        if subcommand == "analyze":
            if probe is None:
                raise InvalidArgumentError("analyze needs --probe")
            return STAGES[subcommand](ctx, probe)
        return STAGES[subcommand](ctx)
    finally:
        ctx.close()

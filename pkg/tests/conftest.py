"""
Shared fixtures: a short noise schedule, an untrained two-dimensional
teacher/student pair and a factory for small run configs.
"""

import copy

import pytest
import torch

from src.cfg.config import RunConfig, validate_config
from src.consistency.distill import DistillRegularizer, build_student, frozen_copy
from src.diffusion.datasets import make_toy_dataset
from src.diffusion.networks import build_denoiser
from src.diffusion.schedule import make_schedule
from src.utils.seeding import make_generator, randint

TINY_T = 20
TINY_C = 3

TINY_DOCUMENT = {
    "schema_version": 1,
    "dataset": {"kind": "mixture", "d": 2, "C": TINY_C, "seed": 0, "n_reference": 64},
    "schedule": {"T": TINY_T, "kind": "linear", "beta_min": 0.005, "beta_max": 0.5},
    "teacher": {"width": 16, "depth": 1, "embed_dim": 8, "iters": 5, "batch_size": 16, "sample_steps": 4},
    "distill": {"skip": 2, "iters": 5, "batch_size": 16},
    "reward": {"kind": "target_region"},
    "surrogate": {"head_width": 8, "pretrain_iters": 3, "holdout_pairs": 4},
    "train": {
        "N_s": 4,
        "outer_iters": 2,
        "checkpoint_every": 1,
        "eval_samples": 8,
        "adapt_batch_size": 2,
        "distill_batch_size": 4,
    },
    "analyze": {
        "t_levels": [2, 5, 10],
        "N": 100,
        "draws": 8,
        "H_list": [1, 2, 4],
        "projections": 32,
        "td_traces": 6,
        "fidelity_samples": 32,
    },
    "io": {"record_wall_time": False},
    "seeds": [0],
}


def tiny_document(**sections) -> dict:
    """TINY_DOCUMENT with some sections (partially) overridden."""
    document = copy.deepcopy(TINY_DOCUMENT)
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(document.get(key), dict):
            document[key].update(value)
        else:
            document[key] = value
    return document


@pytest.fixture
def make_config():
    """Factory building a validated RunConfig from section overrides."""

    def factory(**sections) -> RunConfig:
        return validate_config(tiny_document(**sections))

    return factory


@pytest.fixture
def cfg(make_config) -> RunConfig:
    """Small run config matching the tiny fixtures."""
    return make_config()


@pytest.fixture
def sched():
    """Short linear schedule used by the fast tests."""
    return make_schedule(TINY_T, "linear", 0.005, 0.5)


@pytest.fixture
def dataset():
    """Three-component Gaussian mixture in the plane."""
    return make_toy_dataset("mixture", 2, TINY_C, seed=0)


@pytest.fixture
def teacher():
    """Untrained teacher; the tests only rely on its shape and smoothness."""
    net = build_denoiser(d=2, C=TINY_C, width=16, depth=1, embed_dim=8, seed=0)
    net.requires_grad_(False)
    return net


@pytest.fixture
def student(teacher, sched):
    """Consistency student initialized from the teacher trunk."""
    return build_student(teacher, sched, sigma_data=0.5, timestep_scaling=10.0)


@pytest.fixture
def regularizer(teacher, student, dataset, sched):
    """Offline distillation term with a frozen target copy of the student."""
    return DistillRegularizer(
        teacher=teacher,
        target=frozen_copy(student),
        dataset=dataset,
        sched=sched,
        skip=2,
        batch_size=4,
    )


def _central_difference_check(loss_fn, params, n_coords=10, seed=0, h=1e-6, rtol=1e-4):
    """
    Compare autograd gradients of loss_fn() with central differences at
    n_coords random parameter coordinates. Returns the worst relative error.
    """
    params = [p for p in params if p.requires_grad]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads, strict=True)]

    generator = make_generator(seed)
    worst = 0.0
    for _ in range(n_coords):
        k = int(randint(len(params), 1, generator)[0])
        p, g = params[k], grads[k]
        idx = int(randint(p.numel(), 1, generator)[0])
        flat = p.data.view(-1)
        original = flat[idx].item()
        with torch.no_grad():
            flat[idx] = original + h
            up = loss_fn().item()
            flat[idx] = original - h
            down = loss_fn().item()
            flat[idx] = original
        numeric = (up - down) / (2 * h)
        analytic = g.view(-1)[idx].item()
        error = abs(numeric - analytic) / max(abs(analytic), 1e-3)
        worst = max(worst, error)
        assert error < rtol, f"coordinate {k}/{idx}: analytic {analytic}, numeric {numeric}"
    return worst


@pytest.fixture
def fd_check():
    """Central finite-difference gradient checker (double precision)."""
    return _central_difference_check

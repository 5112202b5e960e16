"""
Discrete-time DDPM teacher: schedules, forward noising, loss, ancestral
sampling and synthetic conditional datasets.
"""

from .datasets import ToyDataset, make_toy_dataset
from .ddpm import ddpm_loss, ddpm_sample, train_teacher
from .networks import DenoiserNet, build_denoiser
from .schedule import NoiseSchedule, forward_diffuse, make_schedule

__all__ = [
    "DenoiserNet",
    "NoiseSchedule",
    "ToyDataset",
    "build_denoiser",
    "ddpm_loss",
    "ddpm_sample",
    "forward_diffuse",
    "make_schedule",
    "make_toy_dataset",
    "train_teacher",
]

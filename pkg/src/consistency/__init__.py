"""
Consistency student: boundary-parameterized model, distillation from the
DDPM teacher, and the multistep samplers with noise re-injection.
"""

from .distill import (
    DistillRegularizer,
    build_student,
    distill_loss,
    distill_student,
    ema_update,
    frozen_copy,
    teacher_step,
)
from .model import BoundaryCoefficients, ConsistencyModel, cm_apply
from .sampling import SamplerTrace, Transition, TwoStepTrace, cm_sample, replay_two_step, sample_two_step

__all__ = [
    "BoundaryCoefficients",
    "ConsistencyModel",
    "DistillRegularizer",
    "SamplerTrace",
    "Transition",
    "TwoStepTrace",
    "build_student",
    "cm_apply",
    "cm_sample",
    "distill_loss",
    "distill_student",
    "ema_update",
    "frozen_copy",
    "replay_two_step",
    "sample_two_step",
    "teacher_step",
]

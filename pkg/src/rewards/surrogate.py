"""
Surrogate reward R_psi(z, c).

The backbone is a trainable copy of the teacher trunk evaluated at a fixed
scorer timestep (t = 0 by default); a small head maps its features to a
scalar. Pairs are scored with the Bradley-Terry loss -log sigmoid(gap).
"""

import copy
from collections.abc import Sequence

import torch
from torch import nn

from ..cfg.config import DTYPE
from ..diffusion.networks import DenoiserNet, build_denoiser
from ..utils.errors import InvalidArgumentError
from .pairs import WLPair


class SurrogateReward(nn.Module):
    def __init__(self, trunk: DenoiserNet, head_width: int = 64, scorer_timestep: int = 0):
        super().__init__()
        self.trunk = trunk
        self.scorer_timestep = scorer_timestep
        self.head = nn.Sequential(
            nn.Linear(trunk.width, head_width),
            nn.SiLU(),
            nn.Linear(head_width, 1),
        ).to(DTYPE)

    def forward(self, z: torch.Tensor, c) -> torch.Tensor:
        squeeze = z.dim() == 1
        if squeeze:
            z = z.unsqueeze(0)
        scores = self.head(self.trunk.features(z, self.scorer_timestep, c)).squeeze(-1)
        return scores.squeeze(0) if squeeze else scores


def build_surrogate(
    teacher: DenoiserNet,
    head_width: int,
    scorer_timestep: int = 0,
    fresh_backbone: bool = False,
    seed: int = 0,
) -> SurrogateReward:
    """
    Surrogate with every parameter trainable.

    Args:
        teacher: Source of the backbone (copied, or only its architecture
            when `fresh_backbone` is set)
        head_width: Hidden width of the scoring head
        scorer_timestep: Timestep at which the backbone sees clean points
        fresh_backbone: Randomly initialize the backbone instead of copying
        seed: Initialization seed for the head (and a fresh backbone)
    """
    if fresh_backbone:
        trunk = build_denoiser(
            teacher.d,
            teacher.C,
            teacher.width,
            len(teacher.blocks),
            teacher.embed_dim,
            seed=seed + 1,
        )
    else:
        trunk = copy.deepcopy(teacher)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        surrogate = SurrogateReward(trunk, head_width=head_width, scorer_timestep=scorer_timestep)
    surrogate.requires_grad_(True)
    return surrogate


def surrogate_score(R: SurrogateReward, z: torch.Tensor, c) -> torch.Tensor:
    """
    R_psi(z, c), differentiable w.r.t. z and psi.

    Raises:
        InvalidArgumentError: non-finite z
    """
    if not bool(torch.isfinite(z).all()):
        raise InvalidArgumentError("surrogate_score got a non-finite input")
    return R(z, c)


def pair_loss_from_scores(score_w: torch.Tensor, score_l: torch.Tensor) -> torch.Tensor:
    """Elementwise -log(exp(s_w) / (exp(s_w) + exp(s_l))) = softplus(s_l - s_w)."""
    return -nn.functional.logsigmoid(score_w - score_l)


def surrogate_pair_loss(R: SurrogateReward, pairs: WLPair | Sequence[WLPair]) -> torch.Tensor:
    """Mean Bradley-Terry loss over one pair or a batch of pairs."""
    if isinstance(pairs, WLPair):
        pairs = [pairs]
    if len(pairs) == 0:
        raise InvalidArgumentError("surrogate_pair_loss needs at least one pair")
    z_w = torch.stack([p.z_w for p in pairs])
    z_l = torch.stack([p.z_l for p in pairs])
    c = torch.as_tensor([p.c for p in pairs], dtype=torch.long)
    scores = surrogate_score(R, torch.cat([z_w, z_l]), torch.cat([c, c]))
    n = len(pairs)
    return pair_loss_from_scores(scores[:n], scores[n:]).mean()

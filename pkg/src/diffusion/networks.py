"""Small conditional residual MLP used as the epsilon-predicting teacher trunk."""

import math

import torch
from torch import nn

from ..cfg.config import DTYPE


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of (possibly fractional) timesteps, shape (n, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=t.dtype, device=t.device) / half
    )
    args = t.reshape(-1, 1) * freqs.reshape(1, -1)
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(width),
            nn.SiLU(),
            nn.Linear(width, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return h + self.net(h)


class DenoiserNet(nn.Module):
    """
    Conditional network (x, t, c) -> epsilon prediction in R^d.

    `features` exposes the trunk output before the final projection; the
    surrogate reward reuses it as its backbone.
    """

    def __init__(self, d: int, C: int, width: int = 128, depth: int = 3, embed_dim: int = 32):
        super().__init__()
        self.d = d
        self.C = C
        self.width = width
        self.embed_dim = embed_dim

        self.in_proj = nn.Linear(d, width)
        self.cond_embedding = nn.Embedding(C, embed_dim)
        self.emb_proj = nn.Sequential(
            nn.Linear(2 * embed_dim, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )
        self.blocks = nn.ModuleList([ResidualBlock(width) for _ in range(depth)])
        self.out_norm = nn.LayerNorm(width)
        self.out_proj = nn.Linear(width, d)
        self.to(DTYPE)

    def _broadcast(self, x: torch.Tensor, t, c) -> tuple[torch.Tensor, torch.Tensor]:
        n = x.shape[0]
        t = torch.as_tensor(t, dtype=x.dtype, device=x.device)
        if t.dim() == 0:
            t = t.expand(n)
        c = torch.as_tensor(c, dtype=torch.long, device=x.device)
        if c.dim() == 0:
            c = c.expand(n)
        return t.to(x.dtype), c

    def features(self, x: torch.Tensor, t, c) -> torch.Tensor:
        """Trunk features (n, width)."""
        squeeze = x.dim() == 1
        if squeeze:
            x = x.unsqueeze(0)
        t, c = self._broadcast(x, t, c)
        emb = torch.cat([timestep_embedding(t, self.embed_dim), self.cond_embedding(c)], dim=-1)
        h = self.in_proj(x) + self.emb_proj(emb)
        for block in self.blocks:
            h = block(h)
        h = nn.functional.silu(self.out_norm(h))
        return h.squeeze(0) if squeeze else h

    def forward(self, x: torch.Tensor, t, c) -> torch.Tensor:
        return self.out_proj(self.features(x, t, c))


def build_denoiser(d: int, C: int, width: int, depth: int, embed_dim: int, seed: int) -> DenoiserNet:
    """Construct a DenoiserNet with seeded initialization."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return DenoiserNet(d=d, C=C, width=width, depth=depth, embed_dim=embed_dim)

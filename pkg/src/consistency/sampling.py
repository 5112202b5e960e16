"""
Multistep consistency sampling with noise re-injection.

Between steps the current clean estimate is forward-noised to the next grid
timestep; the final step is noise-free. The H=2 sampler records a
TwoStepTrace so fine-tuning can replay it with gradients.
"""

from dataclasses import dataclass

import torch

from ..diffusion.schedule import forward_diffuse
from ..utils.errors import InvalidArgumentError, NoDensityError
from ..utils.seeding import make_generator, randn
from .model import ConsistencyModel

SUPPORTED_STEPS = (1, 2, 4, 8)


@dataclass(frozen=True)
class Transition:
    """
    One sampler transition x_from (at t_from) -> x_to (at t_to).

    The transition is Gaussian with mean sqrt(ab[t_to]) f(x_from, t_from, c)
    and std `sigma`; sigma = 0 marks a deterministic transition.
    """

    x_from: torch.Tensor
    x_to: torch.Tensor
    t_from: int
    t_to: int
    sigma: float
    c: torch.Tensor

    @property
    def has_density(self) -> bool:
        return self.sigma > 0

    def require_density(self) -> None:
        if not self.has_density:
            raise NoDensityError(
                f"Transition {self.t_from} -> {self.t_to} is deterministic (sigma = 0) and has no density"
            )


def step_grid(T: int, H: int, mid_timestep: int | None = None) -> list[int]:
    """Timesteps tau_0 = T > tau_1 > ... > tau_{H-1} at which f is evaluated."""
    if H not in SUPPORTED_STEPS:
        raise InvalidArgumentError(f"H must be one of {SUPPORTED_STEPS}, got {H}")
    if H == 2 and mid_timestep is not None:
        return [T, mid_timestep]
    return [int(round(T - i * T / H)) for i in range(H)]


@dataclass
class SamplerTrace:
    """Everything an H-step sampler drew and produced for a batch of n chains."""

    x_T: torch.Tensor
    inputs: list[torch.Tensor]
    outputs: list[torch.Tensor]
    noises: list[torch.Tensor]
    timesteps: list[int]
    c: torch.Tensor
    alpha_bar: torch.Tensor

    @property
    def H(self) -> int:
        return len(self.timesteps)

    @property
    def final(self) -> torch.Tensor:
        return self.outputs[-1]

    def transitions(self) -> list[Transition]:
        """
        The H transitions of the sampler viewed as an MDP.

        Intermediate transitions re-inject noise with std sqrt(1 - ab[tau_{i+1}]);
        the last one lands on the clean output with sigma = 0.
        """
        out = []
        for i, t_from in enumerate(self.timesteps):
            if i + 1 < self.H:
                t_to = self.timesteps[i + 1]
                x_to = self.inputs[i + 1]
                sigma = float(torch.sqrt(1.0 - self.alpha_bar[t_to]))
            else:
                t_to, x_to, sigma = 0, self.outputs[i], 0.0
            out.append(Transition(self.inputs[i], x_to, t_from, t_to, sigma, self.c))
        return out


@dataclass
class TwoStepTrace(SamplerTrace):
    """H=2 trace: x_T -> z1 -> x_mid = noised(z1, Z) -> z2."""

    @property
    def z1(self) -> torch.Tensor:
        return self.outputs[0]

    @property
    def z2(self) -> torch.Tensor:
        return self.outputs[1]

    @property
    def Z(self) -> torch.Tensor:
        return self.noises[0]

    @property
    def x_mid(self) -> torch.Tensor:
        return self.inputs[1]

    @property
    def tau_mid(self) -> int:
        return self.timesteps[1]

    def select(self, idx) -> "TwoStepTrace":
        """Sub-trace for the chains in `idx` (index tensor, list or int)."""
        idx = torch.as_tensor(idx, dtype=torch.long).reshape(-1)
        return TwoStepTrace(
            x_T=self.x_T[idx],
            inputs=[x[idx] for x in self.inputs],
            outputs=[x[idx] for x in self.outputs],
            noises=[x[idx] for x in self.noises],
            timesteps=list(self.timesteps),
            c=self.c[idx],
            alpha_bar=self.alpha_bar,
        )


def cm_sample(
    f: ConsistencyModel,
    c,
    H: int,
    seed: int | torch.Generator,
    n: int = 1,
    x_T: torch.Tensor | None = None,
    noises: list[torch.Tensor] | None = None,
    mid_timestep: int | None = None,
    grad: bool = False,
) -> SamplerTrace:
    """
    Run the H-step consistency sampler.

    Args:
        f: Consistency model
        c: Condition label or LongTensor (n,)
        H: Number of steps, one of 1, 2, 4, 8
        seed: Seed or generator for x_T and the injected noises
        n: Number of chains when c is a single label and x_T is not given
        x_T: Optional starting noise (n, d)
        noises: Optional injected noises, one (n, d) tensor per re-injection
        mid_timestep: Middle timestep for H=2; T/2 when omitted
        grad: Track gradients through f (fine-tuning); sampling runs under
            no_grad otherwise

    Returns:
        SamplerTrace, a TwoStepTrace when H == 2

    Raises:
        InvalidArgumentError: unsupported H or wrongly sized noise overrides
    """
    sched = f.sched
    grid = step_grid(sched.T, H, mid_timestep)
    if noises is not None and len(noises) != H - 1:
        raise InvalidArgumentError(f"Expected {H - 1} injected noises, got {len(noises)}")

    generator = make_generator(seed)
    if x_T is not None:
        n = x_T.shape[0]
    c = torch.as_tensor(c, dtype=torch.long)
    if c.dim() == 0:
        c = c.expand(n)
    elif x_T is None:
        n = c.shape[0]
    x = randn(n, f.d, generator=generator) if x_T is None else x_T
    x_start = x

    inputs, outputs, drawn = [], [], []
    with torch.set_grad_enabled(grad):
        for i, t in enumerate(grid):
            inputs.append(x)
            z = f(x, t, c)
            outputs.append(z)
            if i + 1 < H:
                Z = noises[i] if noises is not None else randn(n, f.d, generator=generator)
                drawn.append(Z)
                x = forward_diffuse(z, grid[i + 1], Z, sched)

    trace_cls = TwoStepTrace if H == 2 else SamplerTrace
    return trace_cls(
        x_T=x_start,
        inputs=inputs,
        outputs=outputs,
        noises=drawn,
        timesteps=grid,
        c=c,
        alpha_bar=sched.alpha_bar,
    )


def sample_two_step(
    f: ConsistencyModel,
    c,
    n: int,
    seed: int | torch.Generator,
    mid_timestep: int | None = None,
    grad: bool = False,
) -> TwoStepTrace:
    return cm_sample(f, c, 2, seed, n=n, mid_timestep=mid_timestep, grad=grad)


def replay_two_step(f: ConsistencyModel, trace: TwoStepTrace, idx=None) -> TwoStepTrace:
    """Re-run the recorded chains (same x_T and Z) with gradients through f."""
    if idx is not None:
        trace = trace.select(idx)
    return cm_sample(
        f,
        trace.c,
        2,
        seed=0,
        x_T=trace.x_T,
        noises=[trace.Z],
        mid_timestep=trace.tau_mid,
        grad=True,
    )

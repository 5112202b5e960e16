"""
Tests to verify the diffusion core: schedules, forward noising, the DDPM
loss and sampler, and the toy datasets.
"""

import math

import pytest
import torch

from src.cfg.config import DTYPE
from src.diffusion.datasets import make_toy_dataset
from src.diffusion.ddpm import ddpm_loss, ddpm_sample, sampling_grid, train_teacher
from src.diffusion.networks import build_denoiser
from src.diffusion.schedule import forward_diffuse, make_schedule
from src.utils.errors import InvalidArgumentError
from src.utils.seeding import make_generator, randint, randn


class TestSchedule:
    """Test make_schedule."""

    def test_single_step_product(self):
        """Test that T=1 gives alpha_bar = [1, 1 - b]."""
        sched = make_schedule(1, "linear", 0.3, 0.3)
        assert sched.alpha_bar.tolist() == [1.0, 1.0 - 0.3]

    def test_default_schedule_reaches_noise(self):
        """Test that the default T=100 schedule ends below alpha_bar 0.01."""
        sched = make_schedule(100)
        assert sched.alpha_bar[100] < 0.01
        assert torch.isclose(sched.alpha_bar[100], torch.prod(1.0 - sched.beta))

    def test_alpha_bar_strictly_decreasing(self):
        """Test that alpha_bar starts at 1 and strictly decreases."""
        sched = make_schedule(50, "linear", 1e-3, 0.2)
        assert sched.alpha_bar[0] == 1.0
        assert bool((sched.alpha_bar[1:] < sched.alpha_bar[:-1]).all())
        assert sched.alpha_bar.dtype == DTYPE

    @pytest.mark.parametrize(
        "T, beta_min, beta_max",
        [(0, 1e-3, 0.2), (10, 0.0, 0.2), (10, 0.3, 0.2), (10, 1e-3, 1.0)],
    )
    def test_invalid_arguments(self, T, beta_min, beta_max):
        """Test that T = 0 and out-of-range betas are rejected."""
        with pytest.raises(InvalidArgumentError):
            make_schedule(T, "linear", beta_min, beta_max)

    def test_unknown_kind(self):
        """Test that only the linear schedule exists."""
        with pytest.raises(InvalidArgumentError):
            make_schedule(10, "cosine")


class TestForwardDiffuse:
    """Test forward_diffuse."""

    def test_t_zero_is_identity(self, sched):
        """Test that t = 0 returns x0 exactly."""
        generator = make_generator(0)
        x0, Z = randn(5, 2, generator=generator), randn(5, 2, generator=generator)
        assert torch.equal(forward_diffuse(x0, 0, Z, sched), x0)

    def test_zero_noise_scales(self, sched):
        """Test that Z = 0 gives sqrt(alpha_bar_t) x0."""
        x0 = randn(5, 2, generator=make_generator(1))
        out = forward_diffuse(x0, 7, torch.zeros_like(x0), sched)
        assert torch.equal(out, torch.sqrt(sched.ab(7)) * x0)

    def test_per_item_timesteps(self, sched):
        """Test that a timestep vector noises each row at its own level."""
        generator = make_generator(2)
        x0, Z = randn(3, 2, generator=generator), randn(3, 2, generator=generator)
        t = torch.tensor([0, 5, 20])
        out = forward_diffuse(x0, t, Z, sched)
        for i in range(3):
            assert torch.allclose(out[i], forward_diffuse(x0[i], int(t[i]), Z[i], sched))

    def test_monte_carlo_moments(self, sched):
        """Test that over 1e5 noise draws the output has mean sqrt(ab) x0 and variance 1 - ab."""
        n, t = 100_000, 8
        x0 = torch.tensor([1.5, -0.5], dtype=DTYPE).expand(n, 2)
        out = forward_diffuse(x0, t, randn(n, 2, generator=make_generator(3)), sched)
        ab = sched.ab(t)
        assert torch.allclose(out.mean(dim=0), torch.sqrt(ab) * x0[0], atol=4 * math.sqrt((1 - ab.item()) / n))
        variance = out.var(dim=0)
        assert bool(((variance - (1 - ab)).abs() <= 0.02 * (1 - ab)).all())

    def test_shape_mismatch(self, sched):
        """Test that x0 and Z must share a shape."""
        with pytest.raises(InvalidArgumentError):
            forward_diffuse(torch.zeros(3, 2, dtype=DTYPE), 1, torch.zeros(3, 3, dtype=DTYPE), sched)

    def test_timestep_out_of_range(self, sched):
        """Test that t > T is rejected."""
        with pytest.raises(InvalidArgumentError):
            forward_diffuse(torch.zeros(1, 2, dtype=DTYPE), sched.T + 1, torch.zeros(1, 2, dtype=DTYPE), sched)


class TestDDPMLoss:
    """Test ddpm_loss."""

    def test_oracle_network_has_zero_loss(self, sched):
        """Test that a network returning the drawn noise has loss 0."""
        n, d, seed = 16, 2, 7
        generator = make_generator(seed)
        randint(sched.T + 1, n, generator, low=1)
        Z = randn(n, d, generator=generator)
        x0 = torch.ones(n, d, dtype=DTYPE)
        c = torch.zeros(n, dtype=torch.long)
        loss = ddpm_loss(lambda x, t, c: Z, x0, c, sched, seed)
        assert loss.item() == 0.0

    def test_zero_network_loss_is_dimension(self, sched):
        """Test that a zero network has loss close to E||Z||^2 = d."""
        n, d = 20000, 2
        x0 = torch.zeros(n, d, dtype=DTYPE)
        c = torch.zeros(n, dtype=torch.long)
        loss = ddpm_loss(lambda x, t, c: torch.zeros_like(x), x0, c, sched, 0)
        assert abs(loss.item() - d) < 0.1

    def test_gradient_matches_finite_differences(self, sched, fd_check):
        """Test ddpm_loss gradients against central differences at 10 coordinates."""
        net = build_denoiser(d=2, C=3, width=16, depth=1, embed_dim=8, seed=1)
        generator = make_generator(2)
        x0 = randn(8, 2, generator=generator)
        c = torch.arange(8) % 3
        fd_check(lambda: ddpm_loss(net, x0, c, sched, seed=5), list(net.parameters()), seed=3)

    def test_empty_batch(self, sched):
        """Test that an empty batch is rejected."""
        with pytest.raises(InvalidArgumentError):
            ddpm_loss(lambda x, t, c: x, torch.zeros(0, 2, dtype=DTYPE), torch.zeros(0, dtype=torch.long), sched, 0)


class TestDDPMSample:
    """Test ddpm_sample and the teacher loop."""

    def test_sampling_grid(self):
        """Test the stride-subsampled reverse grid."""
        assert sampling_grid(100, 4) == [100, 75, 50, 25, 0]
        assert sampling_grid(3, 3) == [3, 2, 1, 0]

    def test_same_seed_identical(self, teacher, sched):
        """Test that sampling is a pure function of the seed."""
        a = ddpm_sample(teacher, 1, sched, 5, seed=3, n=4)
        b = ddpm_sample(teacher, 1, sched, 5, seed=3, n=4)
        assert torch.equal(a, b)
        assert a.shape == (4, 2)

    def test_zero_sigma_is_deterministic(self, teacher, sched):
        """Test that without posterior noise the output depends only on (x_T, c)."""
        x_T = randn(4, 2, generator=make_generator(0))
        a = ddpm_sample(teacher, 2, sched, 5, seed=1, x_T=x_T, sigma_scale=0.0)
        b = ddpm_sample(teacher, 2, sched, 5, seed=2, x_T=x_T, sigma_scale=0.0)
        assert torch.equal(a, b)

    def test_label_vector_sets_batch(self, teacher, sched):
        """Test that a label vector determines the number of samples."""
        out = ddpm_sample(teacher, torch.tensor([0, 1, 2]), sched, 4, seed=0)
        assert out.shape == (3, 2)

    def test_steps_beyond_T(self, teacher, sched):
        """Test that more steps than T are rejected."""
        with pytest.raises(InvalidArgumentError):
            ddpm_sample(teacher, 0, sched, sched.T + 1, seed=0)

    def test_train_teacher_reports_losses(self, dataset, sched):
        """Test that the teacher loop runs and changes the parameters."""
        net = build_denoiser(d=2, C=3, width=8, depth=1, embed_dim=4, seed=0)
        before = [p.clone() for p in net.parameters()]
        seen = []
        losses = train_teacher(net, dataset, sched, 3, 8, 1e-3, 0, on_step=lambda s, l: seen.append(s))
        assert len(losses) == 3 and all(math.isfinite(v) for v in losses)
        assert seen == [0, 1, 2]
        assert any(not torch.equal(a, b) for a, b in zip(before, net.parameters(), strict=True))


class TestToyDataset:
    """Test make_toy_dataset."""

    @pytest.mark.parametrize("kind", ["mixture", "spiral", "checkerboard"])
    def test_fixed_seed_identical_draws(self, kind):
        """Test that a fixed seed gives identical first 100 draws."""
        dataset = make_toy_dataset(kind, 3, 4, seed=0)
        a, ca = dataset.sample_labeled(100, 11)
        b, cb = dataset.sample_labeled(100, 11)
        assert torch.equal(a, b) and torch.equal(ca, cb)
        assert a.shape == (100, 3)
        assert bool(((ca >= 0) & (ca < 4)).all())

    def test_unknown_kind(self):
        """Test that an unknown dataset kind is rejected."""
        with pytest.raises(InvalidArgumentError):
            make_toy_dataset("nope", 2, 2, seed=0)

    @pytest.mark.parametrize("d, C", [(1, 2), (17, 2), (2, 0)])
    def test_out_of_range_sizes(self, d, C):
        """Test that d outside [2, 16] and C < 1 are rejected."""
        with pytest.raises(InvalidArgumentError):
            make_toy_dataset("mixture", d, C, seed=0)

    def test_mixture_density_at_mean(self, dataset):
        """Test the class-conditional log-density at a component mean."""
        x = dataset.means[1:2]
        expected = -0.5 * dataset.d * math.log(2 * math.pi * dataset.std**2)
        assert math.isclose(dataset.log_density(x, 1).item(), expected, rel_tol=1e-12)

    def test_mixture_marginal_density(self, dataset):
        """Test that the marginal density is the mean of the component densities."""
        x = randn(4, 2, generator=make_generator(0))
        per_class = torch.stack([dataset.log_density(x, c) for c in range(dataset.C)], dim=1)
        expected = torch.logsumexp(per_class, dim=1) - math.log(dataset.C)
        assert torch.allclose(dataset.log_density(x), expected)

    def test_spiral_has_no_density(self):
        """Test that non-mixture kinds refuse the analytic density."""
        dataset = make_toy_dataset("spiral", 2, 2, seed=0)
        assert not dataset.has_density
        with pytest.raises(InvalidArgumentError):
            dataset.log_density(torch.zeros(1, 2, dtype=DTYPE))

    def test_condition_out_of_range(self, dataset):
        """Test that labels outside [0, C) are rejected."""
        with pytest.raises(InvalidArgumentError):
            dataset.sample(dataset.C, 2, 0)

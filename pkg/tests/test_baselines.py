"""
Tests to verify the competing fine-tuners.

These tests check that:
- Policy-gradient log-densities exist only for noise-injecting transitions
- RWR weights and the weighted regression behave at their limits
- GORS distills on the best online samples
- The ground-truth-gradient ablation differentiates the true reward
- Every method runs through run_finetune with the same sample budget
"""

import copy
import math

import pytest
import torch

from src.baselines import (
    UpdateContext,
    ddpo_update,
    direct_loss,
    gaussian_logprob,
    gors_update,
    reinforce_loss,
    run_finetune,
    rwr_weights,
    weighted_regression_loss,
)
from src.cfg.config import DTYPE
from src.consistency.sampling import Transition, cm_sample
from src.rewards.signals import QuantizedReward, RewardSignal, make_reward
from src.rewards.surrogate import build_surrogate
from src.training.optim import make_optimizer
from src.utils.errors import InvalidArgumentError, NoDensityError
from src.utils.seeding import make_generator


class ConstantReward(RewardSignal):
    kind = "constant"

    def _score(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return torch.full((x.shape[0],), 0.75, dtype=DTYPE)


@pytest.fixture
def reward(dataset):
    """Continuous target-region reward."""
    return make_reward("target_region", {}, seed=0, dataset=dataset)


@pytest.fixture
def make_context(cfg, student, regularizer):
    """Factory for an update context with a fixed-seed generator."""

    def factory(seed: int = 0, regularizer_=regularizer, lr: float = 1e-3) -> UpdateContext:
        return UpdateContext(
            cfg=cfg,
            optimizer=make_optimizer(student.parameters(), lr, "sgd"),
            regularizer=regularizer_,
            generator=make_generator(seed),
        )

    return factory


class TestPolicyGradient:
    """Test gaussian_logprob, reinforce_loss and ddpo_update."""

    def test_logprob_at_the_mean(self, student):
        """Test log N(mean | mean, sigma^2 I) = -(d/2) log(2 pi sigma^2)."""
        x_from = torch.zeros(3, 2, dtype=DTYPE)
        c = torch.zeros(3, dtype=torch.long)
        with torch.no_grad():
            mean = torch.sqrt(student.sched.ab(10)) * student(x_from, 20, c)
        tr = Transition(x_from, mean, 20, 10, 0.3, c)
        expected = -(2 / 2) * math.log(2 * math.pi * 0.3**2)
        assert torch.allclose(gaussian_logprob(student, tr), torch.full((3,), expected, dtype=DTYPE))

    def test_deterministic_transition(self, student):
        """Test that sigma = 0 has no density."""
        x = torch.zeros(1, 2, dtype=DTYPE)
        tr = Transition(x, x, 10, 0, 0.0, torch.zeros(1, dtype=torch.long))
        with pytest.raises(NoDensityError):
            gaussian_logprob(student, tr)

    def test_degenerate_form_uses_first_transition(self, student, reward):
        """Test that the H = 2 estimator credits only the noise-injecting step."""
        trace = cm_sample(student, 0, 2, seed=0, n=8)
        rewards = reward.evaluate(trace.z2, 0)
        loss = reinforce_loss(student, trace, rewards)
        first = trace.transitions()[0]
        expected = -((rewards - rewards.mean()) * gaussian_logprob(student, first)).mean()
        assert torch.allclose(loss, expected)

    def test_full_form_has_no_density(self, student, reward):
        """Test that the full estimator at H = 2 surfaces NoDensityError."""
        trace = cm_sample(student, 0, 2, seed=0, n=4)
        with pytest.raises(NoDensityError):
            reinforce_loss(student, trace, reward.evaluate(trace.z2, 0), degenerate=False)

    def test_one_step_sampler_has_no_usable_transition(self, student, reward):
        """Test that H = 1 leaves nothing to differentiate."""
        trace = cm_sample(student, 0, 1, seed=0, n=4)
        with pytest.raises(InvalidArgumentError):
            reinforce_loss(student, trace, reward.evaluate(trace.final, 0))

    def test_constant_reward_with_baseline(self, student):
        """Test that a constant reward gives zero gradient only with the baseline."""
        trace = cm_sample(student, 0, 2, seed=3, n=64)
        rewards = ConstantReward().evaluate(trace.z2, 0)
        params = list(student.parameters())

        with_baseline = torch.autograd.grad(reinforce_loss(student, trace, rewards), params, allow_unused=True)
        assert all(g is None or bool((g == 0).all()) for g in with_baseline)

        without = torch.autograd.grad(
            reinforce_loss(student, trace, rewards, use_baseline=False), params, allow_unused=True
        )
        assert any(g is not None and bool(g.abs().sum() > 0) for g in without)

    def test_ddpo_update(self, student, reward, make_context):
        """Test one policy-gradient update and its budget."""
        ctx = make_context()
        metrics = ddpo_update(student, reward, ctx, 1)
        assert {"loss_pg", "reward_mean_2step"} <= set(metrics)
        assert ctx.budget.theta_updates == 1 and ctx.budget.chains == ctx.cfg.train.N_s

    def test_ddpo_full_form(self, student, reward, make_context):
        """Test that ddpo_update without the degenerate form fails at H = 2."""
        with pytest.raises(NoDensityError):
            ddpo_update(student, reward, make_context(), 0, degenerate=False)

    def test_ddpo_four_steps(self, student, reward, make_context):
        """Test that longer samplers keep every noise-injecting transition."""
        metrics = ddpo_update(student, reward, make_context(), 0, H=4)
        assert math.isfinite(metrics["loss_total"])


class TestRWR:
    """Test reward-weighted regression."""

    def test_weights_softmax(self):
        """Test that finite temperatures give a softmax that favors high rewards."""
        weights = rwr_weights(torch.tensor([0.0, 1.0, 2.0], dtype=DTYPE), 0.5)
        assert weights.sum().item() == pytest.approx(1.0)
        assert weights[2] > weights[1] > weights[0]

    def test_infinite_temperature(self):
        """Test that an infinite temperature weights every sample equally."""
        weights = rwr_weights(torch.tensor([0.0, 5.0, -3.0, 1.0], dtype=DTYPE), float("inf"))
        assert torch.equal(weights, torch.full((4,), 0.25, dtype=DTYPE))

    @pytest.mark.parametrize("temperature", [0.0, -1.0])
    def test_non_positive_temperature(self, temperature):
        """Test that temperature <= 0 is rejected."""
        with pytest.raises(InvalidArgumentError):
            rwr_weights(torch.zeros(2, dtype=DTYPE), temperature)

    def test_regression_is_linear_in_weights(self, student):
        """Test zero weights -> 0 and doubled weights -> doubled loss."""
        targets = torch.randn(4, 2, generator=make_generator(0), dtype=DTYPE)
        c = torch.zeros(4, dtype=torch.long)
        weights = torch.full((4,), 0.25, dtype=DTYPE)
        base = weighted_regression_loss(student, targets, c, weights, make_generator(1))
        doubled = weighted_regression_loss(student, targets, c, 2 * weights, make_generator(1))
        zero = weighted_regression_loss(student, targets, c, torch.zeros(4, dtype=DTYPE), make_generator(1))
        assert base.item() > 0
        assert torch.allclose(doubled, 2 * base)
        assert zero.item() == 0.0


class TestGORS:
    """Test gors_update."""

    def test_single_sample_is_distilled(self, cfg, student, reward, regularizer, make_context, monkeypatch):
        """Test that with one sample per group GORS distills on that sample."""
        expected = cm_sample(student, 2, 2, make_generator(5), n=1, mid_timestep=cfg.distill.mid_timestep)
        seen = []
        original = regularizer.loss_on

        def recording_loss_on(f, x0, c, seed):
            seen.append((x0.detach().clone(), c.clone()))
            return original(f, x0, c, seed)

        monkeypatch.setattr(regularizer, "loss_on", recording_loss_on)
        gors_update(student, reward, make_context(seed=5), 2, n_samples=1)

        x0, labels = seen[0]
        assert torch.equal(x0, torch.stack([expected.z1[0], expected.z2[0]]))
        assert labels.tolist() == [2, 2]

    def test_best_samples_are_selected(self, cfg, student, reward, regularizer, make_context, monkeypatch):
        """Test that the distilled points are the reward maximizers of each step."""
        expected = cm_sample(student, 0, 2, make_generator(6), n=4, mid_timestep=cfg.distill.mid_timestep)
        best1 = int(reward.evaluate(expected.z1, 0).argmax())
        best2 = int(reward.evaluate(expected.z2, 0).argmax())
        seen = []
        original = regularizer.loss_on

        def recording_loss_on(f, x0, c, seed):
            seen.append(x0.detach().clone())
            return original(f, x0, c, seed)

        monkeypatch.setattr(regularizer, "loss_on", recording_loss_on)
        metrics = gors_update(student, reward, make_context(seed=6), 0)
        assert torch.equal(seen[0], torch.stack([expected.z1[best1], expected.z2[best2]]))
        assert "loss_online" in metrics

    def test_needs_regularizer(self, student, reward, make_context):
        """Test that GORS without the teacher's distillation term is rejected."""
        with pytest.raises(InvalidArgumentError):
            gors_update(student, reward, make_context(regularizer_=None), 0)


class TestDirect:
    """Test the ground-truth-gradient ablation."""

    def test_black_box_reward_is_rejected(self, student, make_context):
        """Test that a quantized reward has no gradient to follow."""
        quantized = QuantizedReward(torch.zeros(3, 2, dtype=DTYPE), levels=4, radius=1.0)
        with pytest.raises(InvalidArgumentError):
            direct_loss(student, quantized, make_context(), 0)

    def test_loss_gradient_matches_finite_differences(self, student, reward, make_context, fd_check):
        """Test direct_loss gradients against central differences."""

        def loss():
            terms, _, _ = direct_loss(student, reward, make_context(seed=11), 1, pick=(0, 1))
            return terms.total

        fd_check(loss, list(student.parameters()), seed=3)

    def test_normalized_scores_are_clipped(self, student, reward, make_context):
        """Test that the normalized variant pushes stats and stays <= 1."""
        ctx = make_context()
        for _ in range(3):
            terms, z1, z2 = direct_loss(student, reward, ctx, 0, normalize=True)
            assert terms.s1.item() <= 1.0 and terms.s2.item() <= 1.0
        assert ctx.stats1.count == 3 and z1.shape == z2.shape


class TestRunFinetune:
    """Test the shared fine-tuning loop."""

    def test_matched_budgets(self, cfg, student, teacher, reward, regularizer):
        """Test that every method consumes the same chains and reward evaluations."""
        surrogate = build_surrogate(teacher, head_width=8)
        budgets = {}
        for method in ("lasro", "altft", "ddpo", "rwr", "gors", "direct"):
            result = run_finetune(
                method, cfg, copy.deepcopy(student), reward, copy.deepcopy(regularizer), [0, 1, 2], 2,
                seed=0, R=copy.deepcopy(surrogate),
            )
            budgets[method] = (result.budget.chains, result.budget.reward_evals, result.budget.theta_updates)
            assert len(result.history) == 2
        assert len(set(budgets.values())) == 1
        assert budgets["ddpo"] == (2 * cfg.train.N_s, 4 * cfg.train.N_s, 2)

    def test_checkpoints(self, cfg, student, reward, regularizer):
        """Test that checkpoints fire every train.checkpoint_every updates."""
        steps = []
        run_finetune(
            "rwr", cfg, student, reward, regularizer, [0], 2, seed=0,
            on_checkpoint=lambda step, f, ema: steps.append(step),
        )
        assert steps == [1, 2]

    def test_surrogate_required(self, cfg, student, reward, regularizer):
        """Test that lasro and altft need a pre-trained surrogate."""
        for method in ("lasro", "altft"):
            with pytest.raises(InvalidArgumentError):
                run_finetune(method, cfg, student, reward, regularizer, [0], 1, seed=0)

    def test_unknown_method(self, cfg, student, reward, regularizer):
        """Test that unknown methods are rejected."""
        with pytest.raises(InvalidArgumentError):
            run_finetune("ppo", cfg, student, reward, regularizer, [0], 1, seed=0)

    def test_direct_needs_gradients(self, cfg, student, regularizer):
        """Test that direct refuses a black-box reward before sampling."""
        quantized = QuantizedReward(torch.zeros(3, 2, dtype=DTYPE), levels=4, radius=1.0)
        with pytest.raises(InvalidArgumentError):
            run_finetune("direct", cfg, student, quantized, regularizer, [0], 1, seed=0)

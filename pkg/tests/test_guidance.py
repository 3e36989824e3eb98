"""Guidance modes against closed forms on analytic and linear scores."""

import math

import numpy as np
import pytest

from attack.scenes import make_toy_scene
from attack.victim import box_mask, make_victim
from diffkernel import ops
from diffkernel.engine import value_and_grad
from diffusion.errors import GuidanceError
from diffusion.guidance import (
    GUIDANCE_MODES,
    AdversarialEnergy,
    ConstantEnergy,
    EnergyFunction,
    GuidanceHook,
    QuadraticEnergy,
    adv_delta,
    baseline_dps_step,
    baseline_mpgd_step,
    dps_guided_step,
    energy_gradient,
    energy_value_and_gradient,
    jvpg_direction,
    jvpg_guided_step,
    jvpg_step,
    mpgd_guided_step,
)
from diffusion.sampler import ddim_step, posterior_mean
from diffusion.schedule import forward_noise
from diffusion.score_models import LinearScore, gaussian_score, template_mixture, unit_gaussian


class NanEnergy(EnergyFunction):
    def expr(self, z0):
        return ops.log(ops.sub(-1.0, ops.sq_norm(z0)))


class LinearDepth:
    """Depth f(z) = W·vec(z) reshaped to (H, W)"""

    def __init__(self, W, shape):
        self.W = np.asarray(W, dtype=np.float64)
        self.image_shape = tuple(shape)
        self.height, self.width = shape[1], shape[2]

    def depth_expr(self, img):
        flat = ops.reshape(img, (self.W.shape[1],))
        return ops.reshape(ops.matmul(self.W, flat), (self.height, self.width))

    def depth(self, img):
        return (self.W @ np.asarray(img, dtype=np.float64).ravel()).reshape(self.height, self.width)


@pytest.fixture
def linear_model(schedule):
    A = np.array([[-1.2, 0.3, 0.0], [0.1, -0.8, 0.2], [0.0, 0.4, -1.5]])
    return LinearScore(A, (3,), schedule)


class TestEnergyGradient:
    def test_chain_rule_through_unit_gaussian_posterior_mean(self, schedule, rng):
        model = unit_gaussian((4,), schedule)
        z = rng.standard_normal(4)
        for t in (1, 20, 50):
            g = energy_gradient(QuadraticEnergy(np.zeros(4)), z, t, model, None, schedule)
            np.testing.assert_allclose(g, schedule.alpha_bar_at(t) * z, rtol=0, atol=1e-12)

    def test_value_is_energy_of_posterior_mean(self, schedule, rng):
        model = unit_gaussian((2,), schedule)
        z = rng.standard_normal(2)
        target = np.array([1.0, -1.0])
        value, _ = energy_value_and_gradient(QuadraticEnergy(target, weight=3.0), z, 10, model, None, schedule)
        z0 = math.sqrt(schedule.alpha_bar_at(10)) * z
        assert value == pytest.approx(1.5 * np.sum((z0 - target) ** 2), abs=1e-12)

    def test_constant_energy_has_zero_gradient(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        g = energy_gradient(ConstantEnergy(4.0), rng.standard_normal(3), 5, model, None, schedule)
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_non_finite_energy_raises(self, schedule, rng):
        model = unit_gaussian((2,), schedule)
        with pytest.raises(GuidanceError):
            energy_value_and_gradient(NanEnergy(), rng.standard_normal(2), 5, model, None, schedule)


class TestDps:
    def test_effective_score(self, schedule, rng):
        model = gaussian_score(np.array([0.3, -0.7]), np.array([2.0, 0.5]), schedule)
        energy = QuadraticEnergy(np.array([1.0, 1.0]))
        z, eps = rng.standard_normal(2), np.zeros(2)
        step = dps_guided_step(z, 17, model, None, energy, 0.8, eps, schedule)
        expected = model.score(z, 17) - 0.8 * energy_gradient(energy, z, 17, model, None, schedule)
        np.testing.assert_allclose(step.effective_score, expected, rtol=0, atol=1e-14)

    def test_norm_match_scales_to_score(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        z = rng.standard_normal(3)
        step = dps_guided_step(z, 30, model, None, QuadraticEnergy(np.ones(3)), 0.5, np.zeros(3), schedule, norm_match=True)
        assert step.guidance_norm == pytest.approx(0.5 * np.linalg.norm(model.score(z, 30)), rel=1e-12)


class TestJvpg:
    def test_linear_score_effective_score(self, linear_model, schedule, rng):
        energy = QuadraticEnergy(np.array([0.5, 0.0, -0.5]))
        z = rng.standard_normal(3)
        step = jvpg_guided_step(z, 12, linear_model, None, energy, 0.7, np.zeros(3), schedule)
        delta = energy_gradient(energy, z, 12, linear_model, None, schedule)
        np.testing.assert_allclose(step.effective_score, linear_model.A @ z - 0.7 * linear_model.A @ delta, rtol=0, atol=1e-12)
        assert step.jdelta_norm == pytest.approx(np.linalg.norm(linear_model.A @ delta), rel=1e-12)

    def test_difference_from_dps_is_jacobian_modulation(self, linear_model, schedule, rng):
        energy = QuadraticEnergy(np.ones(3))
        z = rng.standard_normal(3)
        gamma = 1.3
        dps = dps_guided_step(z, 12, linear_model, None, energy, gamma, np.zeros(3), schedule)
        jvpg = jvpg_guided_step(z, 12, linear_model, None, energy, gamma, np.zeros(3), schedule)
        delta = energy_gradient(energy, z, 12, linear_model, None, schedule)
        np.testing.assert_allclose(
            dps.effective_score - jvpg.effective_score, gamma * (linear_model.A @ delta - delta), rtol=0, atol=1e-12
        )

    def test_shifted_linearization_is_irrelevant_for_linear_scores(self, linear_model, schedule, rng):
        energy = QuadraticEnergy(np.ones(3))
        z = rng.standard_normal(3)
        a = jvpg_guided_step(z, 9, linear_model, None, energy, 0.4, np.zeros(3), schedule)
        b = jvpg_guided_step(z, 9, linear_model, None, energy, 0.4, np.zeros(3), schedule, linearize_at="shifted")
        np.testing.assert_allclose(a.effective_score, b.effective_score, rtol=0, atol=1e-14)

    def test_unknown_linearization_point(self, linear_model, schedule):
        with pytest.raises(GuidanceError):
            jvpg_guided_step(np.zeros(3), 9, linear_model, None, QuadraticEnergy(np.ones(3)), 0.4, np.zeros(3), schedule, linearize_at="midpoint")

    def test_spectral_modulation_ratio(self, schedule):
        # Σ = diag(4, 1) at ᾱ = 1: J = diag(−1/4, −1)
        model = gaussian_score(np.zeros(2), np.array([4.0, 1.0]), schedule)
        jd = jvpg_direction(model, np.array([0.3, -0.2]), 0, None, np.array([1.0, 1.0]))
        u_plus, u_minus = np.array([0.0, 1.0]), np.array([1.0, 0.0])
        assert abs(jd @ u_plus) / abs(jd @ u_minus) == pytest.approx(4.0, abs=1e-9)

    def test_oriented_gamma_on_negative_identity_matches_dps(self, schedule, rng):
        model = LinearScore(-np.eye(3), (3,), schedule)
        energy = QuadraticEnergy(np.array([2.0, 0.0, 1.0]))
        z = rng.standard_normal(3)
        dps = dps_guided_step(z, 20, model, None, energy, 0.6, np.zeros(3), schedule)
        jvpg = jvpg_guided_step(z, 20, model, None, energy, 0.6, np.zeros(3), schedule, orient_gamma=True)
        assert jvpg.gamma_eff == -0.6
        np.testing.assert_allclose(jvpg.effective_score, dps.effective_score, rtol=0, atol=1e-14)

    def test_norm_match(self, linear_model, schedule, rng):
        z = rng.standard_normal(3)
        step = jvpg_guided_step(z, 20, linear_model, None, QuadraticEnergy(np.ones(3)), 0.25, np.zeros(3), schedule, norm_match=True)
        assert step.guidance_norm == pytest.approx(0.25 * np.linalg.norm(linear_model.A @ z), rel=1e-12)


class TestMpgd:
    def test_clean_space_step(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        target = np.array([1.0, 2.0, -1.0])
        z = rng.standard_normal(3)
        step = mpgd_guided_step(z, 25, model, None, QuadraticEnergy(target), 0.3, np.zeros(3), schedule)
        np.testing.assert_allclose(step.z0_guided - step.z0_pred, -0.3 * (step.z0_pred - target), rtol=0, atol=1e-12)

    def test_zero_step_is_identity(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        z, eps = rng.standard_normal(3), rng.standard_normal(3)
        guided = mpgd_guided_step(z, 25, model, None, QuadraticEnergy(np.ones(3)), 0.0, eps, schedule)
        plain = GUIDANCE_MODES["none"](z, 25, model, None, None, 0.0, eps, schedule)
        np.testing.assert_array_equal(guided.z_prev, plain.z_prev)


class TestHook:
    def test_registry_holds_every_mode(self):
        assert set(GUIDANCE_MODES) == {"none", "energy_dps", "jvpg", "mpgd"}

    def test_unknown_mode(self):
        with pytest.raises(GuidanceError):
            GuidanceHook("reward_tilt", QuadraticEnergy(np.zeros(2)), 1.0)

    def test_guided_mode_needs_energy(self, schedule):
        with pytest.raises(GuidanceError):
            GuidanceHook("jvpg", None, 1.0).validate(unit_gaussian((2,), schedule))

    def test_labels(self):
        assert GuidanceHook("mpgd", QuadraticEnergy(np.zeros(2)), 1.0).label == "mpgd-style"
        assert GuidanceHook("jvpg", QuadraticEnergy(np.zeros(2)), 1.0).label == "jvpg"


class TestAdversarialEnergy:
    def test_gradient_vanishes_outside_object_mask(self, victim, target_mask, rng):
        x = rng.random(victim.image_shape)
        mask_a = box_mask(16, 16, (5, 3, 8, 9))
        energy = AdversarialEnergy(victim, x, target_mask, lam=2.0, mask_a=mask_a)
        _, g = value_and_grad(energy.as_fn(x.shape), rng.random(x.shape))
        np.testing.assert_array_equal(g * (1.0 - mask_a), np.zeros_like(g))
        assert np.any(g * mask_a)

    def test_reference_depth_follows_image(self, victim, target_mask, rng):
        x = rng.random(victim.image_shape)
        energy = AdversarialEnergy(victim, x, target_mask)
        before = energy.reference_depth.copy()
        energy.x = x + 0.5
        assert not np.allclose(before, energy.reference_depth)

    def test_unit_lambda_leaves_the_original_at_zero(self, victim, target_mask, rng):
        x = rng.random(victim.image_shape)
        assert AdversarialEnergy(victim, x, target_mask, lam=1.0).value(x) == 0.0

    def test_unmodified_image_has_positive_energy(self, victim, target_mask, rng):
        x = rng.random(victim.image_shape)
        assert AdversarialEnergy(victim, x, target_mask).value(x) > 0.0

    def test_lambda_must_be_positive(self, victim, target_mask):
        with pytest.raises(GuidanceError):
            AdversarialEnergy(victim, np.zeros(victim.image_shape), target_mask, lam=0.0)


def _composite_loss(energy, z_t, t, model, c, sched):
    return energy.value(posterior_mean(z_t, t, model, c, sched))


class TestAdvDelta:
    @pytest.mark.parametrize("kind", ["patch_pool", "tiny_conv", "planted"])
    def test_matches_finite_differences_of_the_composite(self, kind, target_mask, schedule, rng):
        victim = make_toy_scene(11).victim if kind == "planted" else make_victim(kind, seed=7)
        model = template_mixture(schedule)
        x = rng.random(victim.image_shape)
        energy = AdversarialEnergy(victim, x, target_mask, lam=2.0)
        z_t = 0.5 + 0.3 * rng.standard_normal(victim.image_shape)
        t = 20

        delta = adv_delta(energy, z_t, t, model, None, schedule)

        h = 1e-5
        fd = np.zeros_like(z_t)
        for idx in np.ndindex(z_t.shape):
            e = np.zeros_like(z_t)
            e[idx] = h
            up = _composite_loss(energy, z_t + e, t, model, None, schedule)
            down = _composite_loss(energy, z_t - e, t, model, None, schedule)
            fd[idx] = (up - down) / (2 * h)
        assert np.linalg.norm(delta - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_linear_victim_closed_form(self, schedule, rng):
        shape = (1, 4, 4)
        W = rng.standard_normal((16, 16))
        victim = LinearDepth(W, shape)
        mask_t = box_mask(4, 4, (2, 1, 3, 2))
        x, z = rng.random(shape), rng.random(shape)
        model = LinearScore(-np.eye(16), shape, schedule)

        # t = 0: ᾱ = 1, so z_{0|t} = z_t
        delta = adv_delta(AdversarialEnergy(victim, x, mask_t, lam=2.0), z, 0, model, None, schedule)

        row = W[2 * 4 + 1]
        expected = 2.0 * (row @ z.ravel() - 2.0 * (row @ x.ravel())) * row
        np.testing.assert_allclose(delta, expected.reshape(shape), rtol=0, atol=1e-10)

    def test_vanishes_at_the_stationary_point(self, victim, target_mask, schedule, rng):
        x = rng.random(victim.image_shape)
        model = LinearScore(-np.eye(256), victim.image_shape, schedule)
        delta = adv_delta(AdversarialEnergy(victim, x, target_mask, lam=1.0), x, 0, model, None, schedule)
        np.testing.assert_allclose(delta, np.zeros_like(x), rtol=0, atol=1e-12)


class TestStepWrappers:
    @pytest.mark.parametrize("step", [baseline_dps_step, jvpg_step, baseline_mpgd_step])
    def test_zero_gamma_is_the_unguided_step(self, step, schedule, rng):
        model = unit_gaussian((3,), schedule)
        z, eps = rng.standard_normal(3), rng.standard_normal(3)
        guided = step(z, 25, model, None, QuadraticEnergy(np.ones(3)), 0.0, eps, schedule)
        plain = GUIDANCE_MODES["none"](z, 25, model, None, None, 0.0, eps, schedule).z_prev
        np.testing.assert_array_equal(guided, plain)

    def test_dps_step_uses_the_energy_gradient(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        energy = QuadraticEnergy(np.array([1.0, -2.0, 0.5]))
        z, eps = rng.standard_normal(3), rng.standard_normal(3)
        g = energy_gradient(energy, z, 25, model, None, schedule)
        expected = ddim_step(z, 25, model.score(z, 25, None) - 0.7 * g, eps, schedule)
        np.testing.assert_allclose(baseline_dps_step(z, 25, model, None, energy, 0.7, eps, schedule), expected, rtol=0, atol=1e-14)

    def test_jvpg_step_difference_is_the_bracket_times_the_guidance(self, linear_model, schedule, rng):
        energy = QuadraticEnergy(np.array([0.5, 1.0, -1.0]))
        z, eps = rng.standard_normal(3), np.zeros(3)
        delta = energy_gradient(energy, z, 30, linear_model, None, schedule)
        bracket = ddim_step(np.zeros(3), 30, np.ones(3), np.zeros(3), schedule)[0]

        guided = jvpg_step(z, 30, linear_model, None, energy, 0.4, eps, schedule)
        plain = GUIDANCE_MODES["none"](z, 30, linear_model, None, None, 0.0, eps, schedule).z_prev
        np.testing.assert_allclose(guided - plain, bracket * (-0.4 * linear_model.A @ delta), rtol=0, atol=1e-12)

    def test_mpgd_step_is_the_guided_step(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        energy = QuadraticEnergy(np.array([1.0, 2.0, -1.0]))
        z, eps = rng.standard_normal(3), rng.standard_normal(3)
        step = mpgd_guided_step(z, 25, model, None, energy, 0.3, eps, schedule)
        np.testing.assert_array_equal(baseline_mpgd_step(z, 25, model, None, energy, 0.3, eps, schedule), step.z_prev)
        assert not np.array_equal(step.z_prev, GUIDANCE_MODES["none"](z, 25, model, None, None, 0.0, eps, schedule).z_prev)


def test_small_jvpg_step_descends_the_adversarial_energy(schedule):
    # near the data J_s is negative definite, so γ < 0 descends under s − γ·Jδ
    rng = np.random.default_rng(21)
    model = template_mixture(schedule)
    noise = np.zeros(model.shape)
    trials, descended = 30, 0
    for seed in range(trials):
        toy = make_toy_scene(seed)
        energy = AdversarialEnergy(toy.victim, toy.x, toy.mask_t, lam=2.0, mask_a=box_mask(16, 16, toy.planted_box))
        t = int(rng.integers(5, 40))
        z_t = forward_noise(toy.x, t, rng.standard_normal(model.shape), schedule)

        guided = jvpg_step(z_t, t, model, toy.label, energy, -1e-4, noise, schedule)
        plain = GUIDANCE_MODES["none"](z_t, t, model, toy.label, None, 0.0, noise, schedule).z_prev
        after = _composite_loss(energy, guided, t - 1, model, toy.label, schedule)
        before = _composite_loss(energy, plain, t - 1, model, toy.label, schedule)
        descended += after < before
    assert descended >= 0.9 * trials

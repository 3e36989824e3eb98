"""Analytic scores, the MLP score network, DSM training and the factory."""

import math

import numpy as np
import pytest

from diffkernel import ops
from diffkernel.engine import DifferentiableFn, evaluate, jvp
from diffusion.errors import ScoreModelError
from diffusion.schedule import build_schedule
from diffusion.score_models import (
    GaussianMixtureScore,
    LinearScore,
    MlpScore,
    ScoreModelFactory,
    anisotropic_mixture,
    dsm_train,
    gaussian_score,
    scene_templates,
    template_mixture,
    unit_gaussian,
)


def _numeric_log_density_grad(model, z, t, eps=1e-5):
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e.flat[i] = eps
        g.flat[i] = (model.marginal_log_density(z + e, t) - model.marginal_log_density(z - e, t)) / (2 * eps)
    return g


class TestGaussianMixture:
    def test_unit_gaussian_score_is_minus_z(self, schedule, rng):
        model = unit_gaussian((3,), schedule)
        z = rng.standard_normal(3)
        for t in (1, 25, 50):
            np.testing.assert_allclose(model.score(z, t), -z, rtol=0, atol=1e-14)

    def test_symmetric_mixture_at_origin(self):
        sched = build_schedule("linear_beta", 10)
        model = GaussianMixtureScore([0.5, 0.5], np.array([[1.0], [-1.0]]), 0.01, sched)
        assert model.score(np.zeros(1), 0)[0] == pytest.approx(0.0, abs=1e-14)

    def test_symmetric_mixture_matches_log_density_gradient(self):
        sched = build_schedule("linear_beta", 10)
        model = GaussianMixtureScore([0.5, 0.5], np.array([[1.0], [-1.0]]), 0.01, sched)
        z = np.array([0.5])
        np.testing.assert_allclose(model.score(z, 0), _numeric_log_density_grad(model, z, 0), rtol=1e-5)

    def test_mixture_score_is_log_density_gradient(self, schedule, rng):
        model = anisotropic_mixture(schedule, dim=4, separation=3.0)
        z = rng.standard_normal(4)
        np.testing.assert_allclose(model.score(z, 20), _numeric_log_density_grad(model, z, 20), rtol=1e-5, atol=1e-8)

    def test_single_gaussian_jacobian_is_constant(self, schedule, rng):
        model = gaussian_score(np.array([0.5, -0.2, 1.0]), np.array([4.0, 1.0, 0.25]), schedule)
        v = rng.standard_normal(3)
        fn = model.as_fn(13)
        a = jvp(fn, rng.standard_normal(3), v)
        b = jvp(fn, rng.standard_normal(3), v)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        ab = schedule.alpha_bar_at(13)
        np.testing.assert_allclose(a, -v / (ab * np.array([4.0, 1.0, 0.25]) + 1.0 - ab), rtol=0, atol=1e-12)

    def test_one_component_mixture_equals_single_gaussian(self, schedule, rng):
        mean, var = rng.standard_normal(4), np.array([1.0, 2.0, 0.5, 0.1])
        single = gaussian_score(mean, var, schedule)
        mixture = GaussianMixtureScore([1.0], mean[None], var[None], schedule)
        z = rng.standard_normal(4)
        np.testing.assert_array_equal(single.score(z, 7), mixture.score(z, 7))

    def test_conditional_score_uses_one_component(self, schedule, rng):
        model = template_mixture(schedule, n_classes=3, height=8, width=8)
        z = rng.standard_normal(model.shape)
        S, m = model.marginal(10)
        np.testing.assert_allclose(model.score(z, 10, 1), -(z - m[1]) / S[1], rtol=0, atol=1e-14)

    def test_log_density_of_mean_is_maximal(self, schedule):
        model = gaussian_score(np.zeros(2), 1.0, schedule)
        assert model.log_density(np.zeros(2)) == pytest.approx(-math.log(2 * math.pi))
        assert model.log_density(np.ones(2)) < model.log_density(np.zeros(2))

    @pytest.mark.parametrize(
        "weights, variances",
        [([0.6, 0.6], 1.0), ([1.0, 0.0], 1.0), ([0.5, 0.5], -1.0)],
    )
    def test_invalid_mixture(self, schedule, weights, variances):
        with pytest.raises(ScoreModelError):
            GaussianMixtureScore(weights, np.zeros((2, 3)), variances, schedule)

    def test_invalid_condition(self, schedule):
        model = template_mixture(schedule)
        with pytest.raises(ScoreModelError):
            model.score(np.zeros(model.shape), 5, c=7)

    def test_step_out_of_range(self, schedule):
        with pytest.raises(ScoreModelError):
            unit_gaussian((2,), schedule).score(np.zeros(2), 51)

    def test_sample_data_moments(self, schedule):
        model = gaussian_score(np.array([2.0]), 0.25, schedule)
        draws = model.sample_data(np.random.default_rng(0), 20_000)
        assert draws.mean() == pytest.approx(2.0, abs=0.02)
        assert draws.var() == pytest.approx(0.25, abs=0.02)


class TestLinearScore:
    def test_jvp_is_matrix_product(self, schedule, rng):
        A = rng.standard_normal((4, 4))
        model = LinearScore(A, (4,), schedule)
        v = rng.standard_normal(4)
        np.testing.assert_allclose(jvp(model.as_fn(5), rng.standard_normal(4), v), A @ v, rtol=0, atol=1e-14)

    def test_wrong_matrix_shape(self, schedule):
        with pytest.raises(ScoreModelError):
            LinearScore(np.eye(3), (4,), schedule)


class TestTemplates:
    def test_templates_in_unit_range(self):
        t = scene_templates(3, 16, 16)
        assert t.shape == (3, 1, 16, 16)
        assert t.min() >= 0.0 and t.max() <= 1.0

    def test_classes_differ(self):
        t = scene_templates(3, 16, 16)
        assert not np.allclose(t[0], t[1])


class TestMlpScore:
    def test_jvp_matches_finite_differences(self, schedule, rng):
        model = MlpScore.init((6,), (16,), schedule, seed=42)
        fn = model.as_fn(20)
        z, v = rng.standard_normal(6), rng.standard_normal(6)
        eps = 1e-5
        fd = (evaluate(fn, z + eps * v) - evaluate(fn, z - eps * v)) / (2 * eps)
        np.testing.assert_allclose(jvp(fn, z, v), fd, rtol=1e-6, atol=1e-9)

    def test_conditional_features(self, schedule):
        model = MlpScore.init((4,), (8,), schedule, n_classes=2, seed=1)
        z = np.ones(4)
        assert not np.allclose(model.score(z, 10, 0), model.score(z, 10, 1))

    def test_theta_shape_checked(self, schedule):
        with pytest.raises(ScoreModelError):
            MlpScore((4,), (8,), schedule, np.zeros(3))

    def test_save_and_load(self, schedule, tmp_path):
        model = MlpScore.init((2, 3), (8, 8), schedule, n_classes=2, seed=5)
        model.save(tmp_path / "mlp")
        loaded = MlpScore.load(tmp_path / "mlp", schedule)
        np.testing.assert_array_equal(loaded.theta, model.theta)
        assert loaded.shape == (2, 3)

    def test_load_rejects_other_schedule(self, schedule, tmp_path):
        MlpScore.init((3,), (4,), schedule).save(tmp_path / "mlp")
        with pytest.raises(ScoreModelError):
            MlpScore.load(tmp_path / "mlp", build_schedule("cosine", 50, 0.0, (0.008, 0.0)))


class TestDsmTraining:
    def test_zero_steps_returns_init(self, schedule):
        init = MlpScore.init((2,), (8,), schedule)
        assert dsm_train(init, np.zeros((4, 2)), schedule, steps=0, lr=1e-3, seed=0) is init

    def test_training_is_deterministic(self, short_schedule):
        init = MlpScore.init((2,), (8,), short_schedule, seed=3)
        data = np.random.default_rng(0).standard_normal((64, 2))
        a = dsm_train(init, data, short_schedule, steps=5, lr=1e-2, seed=9, batch_size=16)
        b = dsm_train(init, data, short_schedule, steps=5, lr=1e-2, seed=9, batch_size=16)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert a.loss_trace == b.loss_trace
        assert a.training_steps == 5

    def test_empty_dataset(self, schedule):
        with pytest.raises(ScoreModelError):
            dsm_train(MlpScore.init((2,), (4,), schedule), np.zeros((0, 2)), schedule, steps=1, lr=1e-3, seed=0)

    @pytest.mark.slow
    def test_learns_unit_gaussian_score(self, short_schedule):
        init = MlpScore.init((2,), (32,), short_schedule, seed=42)
        data = np.random.default_rng(1).standard_normal((2048, 2))
        model = dsm_train(init, data, short_schedule, steps=1500, lr=5e-3, seed=2, batch_size=128)
        rng = np.random.default_rng(3)
        errs = []
        for _ in range(200):
            t = int(rng.integers(1, short_schedule.T + 1))
            z = rng.standard_normal(2)
            errs.append(np.sum((model.score(z, t) + z) ** 2) / 2)
        assert float(np.mean(errs)) < 0.1


class TestFactory:
    def test_supported_kinds(self):
        assert {"templates", "unit_gaussian", "anisotropic", "mlp"} <= set(ScoreModelFactory.get_supported_kinds())

    def test_unknown_kind(self, schedule):
        with pytest.raises(ScoreModelError):
            ScoreModelFactory.create({"kind": "diffusers"}, schedule)

    def test_invalid_spec(self, schedule):
        with pytest.raises(ScoreModelError):
            ScoreModelFactory.create({"kind": "gaussian", "mean": [0.0]}, schedule)

    def test_templates_shape(self, schedule):
        model = ScoreModelFactory.create({"kind": "templates", "height": 8, "width": 8}, schedule)
        assert model.shape == (1, 8, 8)
        assert model.analytic

    def test_untrained_mlp_from_shape(self, schedule):
        model = ScoreModelFactory.create({"kind": "mlp", "shape": [1, 4, 4]}, schedule)
        assert model.shape == (1, 4, 4)
        assert not model.analytic


def test_score_expression_composes_with_ops(schedule, rng):
    model = unit_gaussian((3,), schedule)
    fn = DifferentiableFn(lambda z: ops.sq_norm(model.score_expr(z, 4)), [(3,)])
    z = rng.standard_normal(3)
    assert float(evaluate(fn, z)) == pytest.approx(float(np.sum(z * z)))

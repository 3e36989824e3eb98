"""Noise schedules and forward noising."""

import math

import numpy as np
import pytest

from diffusion.errors import ScheduleError
from diffusion.schedule import (
    COSINE_DEFAULT_PARAMS,
    build_schedule,
    forward_noise,
    schedule_from_text,
    schedule_to_text,
)


class TestBuildSchedule:
    def test_alpha_bar_is_cumulative_product(self, schedule):
        prev = 1.0
        for t in range(1, schedule.T + 1):
            assert abs(schedule.alpha_bar_at(t) - prev * schedule.alpha_at(t)) <= 1e-14
            prev = schedule.alpha_bar_at(t)

    def test_terminal_alpha_bar_matches_product_loop(self, schedule):
        betas = np.linspace(1e-4, 0.2, 50)
        product = 1.0
        for b in betas:
            product *= 1.0 - b
        assert abs(schedule.alpha_bar_at(50) - product) <= 1e-14

    def test_alpha_bar_zero_is_one(self, schedule):
        assert schedule.alpha_bar_at(0) == 1.0

    def test_strictly_decreasing(self, schedule):
        assert np.all(np.diff(schedule.alpha_bar) < 0)

    def test_deterministic_sigma_is_zero(self, schedule):
        assert np.all(schedule.sigma == 0.0)

    def test_stochastic_sigma_bounded(self):
        sched = build_schedule("linear_beta", 50, 1.0)
        for t in range(1, 51):
            assert sched.sigma_at(t) ** 2 <= 1.0 - sched.alpha_bar_at(t - 1) + 1e-15

    def test_cosine_schedule_valid(self):
        sched = build_schedule("cosine", 50, 0.0, COSINE_DEFAULT_PARAMS)
        assert sched.alpha_bar_at(1) > sched.alpha_bar_at(50) > 0.0

    def test_single_step(self):
        sched = build_schedule("linear_beta", 1, 0.0)
        assert sched.T == 1
        assert sched.alpha_bar_at(1) == pytest.approx(1.0 - 1e-4)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "quadratic"},
            {"T": 0},
            {"eta_ddim": 1.5},
            {"params": (0.2, 0.1)},
            {"params": (0.0, 0.1)},
        ],
    )
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ScheduleError):
            build_schedule(**kwargs)

    def test_step_out_of_range(self, schedule):
        with pytest.raises(ScheduleError):
            schedule.alpha_at(51)


class TestForwardNoise:
    def test_affine_superposition(self, schedule, rng):
        z1, z2 = rng.standard_normal((2, 6))
        e1, e2 = rng.standard_normal((2, 6))
        a, b = 0.3, -1.2
        lhs = forward_noise(a * z1 + b * z2, 17, a * e1 + b * e2, schedule)
        rhs = a * forward_noise(z1, 17, e1, schedule) + b * forward_noise(z2, 17, e2, schedule)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_monte_carlo_moments(self, schedule):
        rng = np.random.default_rng(5)
        z0 = np.array([0.7, -1.3])
        n = 100_000
        t = 25
        eps = rng.standard_normal((n, 2))
        zt = forward_noise(np.broadcast_to(z0, (n, 2)), t, eps, schedule)
        ab = schedule.alpha_bar_at(t)
        var = 1.0 - ab
        stderr_mean = math.sqrt(var / n)
        stderr_var = var * math.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(zt.mean(axis=0) - math.sqrt(ab) * z0) < 4 * stderr_mean)
        assert np.all(np.abs(zt.var(axis=0, ddof=1) - var) < 4 * stderr_var)

    def test_shape_mismatch(self, schedule):
        with pytest.raises(ScheduleError):
            forward_noise(np.zeros(3), 1, np.zeros(4), schedule)

    def test_t_zero_rejected(self, schedule):
        with pytest.raises(ScheduleError):
            forward_noise(np.zeros(3), 0, np.zeros(3), schedule)


class TestTextDump:
    def test_restores_tables_verbatim(self):
        sched = build_schedule("cosine", 20, 0.5, COSINE_DEFAULT_PARAMS)
        restored = schedule_from_text(schedule_to_text(sched))
        np.testing.assert_array_equal(restored.alpha_bar, sched.alpha_bar)
        np.testing.assert_array_equal(restored.sigma, sched.sigma)
        assert restored.schedule_id == sched.schedule_id

    def test_text_is_stable(self, schedule):
        assert schedule_to_text(schedule) == schedule_to_text(build_schedule())

    def test_malformed_row(self):
        with pytest.raises(ScheduleError):
            schedule_from_text("t alpha alpha_bar sigma\n1 0.9 0.9\n")

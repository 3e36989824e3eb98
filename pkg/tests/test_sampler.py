"""DDIM updates, Tweedie estimates and trajectory bookkeeping."""

import math

import numpy as np
import pytest

from diffkernel import ops
from diffusion.errors import SamplingError
from diffusion.guidance import GuidanceHook, QuadraticEnergy
from diffusion.sampler import (
    DdimSampler,
    InpaintTarget,
    SamplerConfig,
    ddim_coefficient,
    ddim_step,
    posterior_mean,
    sample,
)
from diffusion.schedule import build_schedule
from diffusion.score_models import ScoreModel, gaussian_score, unit_gaussian


class ExplodingScore(ScoreModel):
    """Score that turns non-finite from step 5 down"""

    def score_expr(self, z, t, c=None):
        return ops.mul(z, float("inf") if t <= 5 else -1.0)


class TestSingleStep:
    def test_unit_gaussian_contraction_per_step(self, schedule, rng):
        model = unit_gaussian((4,), schedule)
        traj = sample(model, None, SamplerConfig(schedule=schedule, seed=7))
        for i, t in enumerate(range(schedule.T, 0, -1)):
            factor = math.sqrt(schedule.alpha_bar_at(t) * schedule.alpha_bar_at(t - 1)) + math.sqrt(
                (1.0 - schedule.alpha_bar_at(t)) * (1.0 - schedule.alpha_bar_at(t - 1))
            )
            np.testing.assert_allclose(traj.states[i + 1], factor * traj.states[i], rtol=0, atol=1e-12)

    def test_shape_mismatch(self, schedule):
        with pytest.raises(SamplingError):
            ddim_step(np.zeros(3), 4, np.zeros(2), np.zeros(3), schedule)

    def test_coefficient_is_positive(self, schedule):
        assert all(ddim_coefficient(t, schedule) > 0.0 for t in range(1, schedule.T + 1))


class TestPosteriorMean:
    def test_unit_gaussian(self, schedule, rng):
        model = unit_gaussian((5,), schedule)
        z = rng.standard_normal(5)
        np.testing.assert_allclose(
            posterior_mean(z, 30, model, None, schedule), math.sqrt(schedule.alpha_bar_at(30)) * z, rtol=0, atol=1e-14
        )

    def test_single_gaussian_conditional_expectation(self, schedule, rng):
        mean = np.array([0.5, -1.0, 2.0])
        var = np.array([4.0, 1.0, 0.25])
        model = gaussian_score(mean, var, schedule)
        for _ in range(1000):
            t = int(rng.integers(1, schedule.T + 1))
            z = 3.0 * rng.standard_normal(3)
            ab = schedule.alpha_bar_at(t)
            S = ab * var + 1.0 - ab
            expected = mean + math.sqrt(ab) * var / S * (z - math.sqrt(ab) * mean)
            np.testing.assert_allclose(posterior_mean(z, t, model, None, schedule), expected, rtol=0, atol=1e-10)


class TestSampling:
    def test_trajectory_length_and_records(self, short_schedule):
        model = unit_gaussian((2,), short_schedule)
        traj = sample(model, None, SamplerConfig(schedule=short_schedule, seed=1))
        assert len(traj.states) == short_schedule.T + 1
        assert [r.t for r in traj.records] == list(range(short_schedule.T, 0, -1))
        assert list(traj.to_frame().columns) == ["t", "energy", "z_norm", "guidance_norm", "delta_norm", "jdelta_norm"]

    def test_same_seed_same_trajectory(self, short_schedule):
        model = unit_gaussian((3,), build_schedule("linear_beta", 10, 1.0))
        cfg = SamplerConfig(schedule=model.schedule, seed=4)
        np.testing.assert_array_equal(sample(model, None, cfg).terminal, sample(model, None, cfg).terminal)

    def test_segments_resume_on_the_same_stream(self):
        sched = build_schedule("linear_beta", 12, 0.7)
        model = unit_gaussian((3,), sched)
        cfg = SamplerConfig(schedule=sched, seed=8)
        full = sample(model, None, cfg).terminal
        sampler = DdimSampler(model, None, cfg)
        state = sampler.run_segment(sampler.start(), 6)
        state = sampler.run_segment(state, 0)
        np.testing.assert_array_equal(state.z, full)

    def test_energy_recorded_without_guidance(self, short_schedule):
        model = unit_gaussian((2,), short_schedule)
        hook = GuidanceHook("none", QuadraticEnergy(np.ones(2)), 0.0)
        traj = sample(model, None, SamplerConfig(schedule=short_schedule, seed=2), guidance=hook)
        assert all(np.isfinite(traj.energies))

    @pytest.mark.parametrize("mode", ["energy_dps", "jvpg", "mpgd"])
    def test_zero_gamma_is_unguided(self, short_schedule, mode):
        model = unit_gaussian((3,), short_schedule)
        energy = QuadraticEnergy(np.full(3, 2.0))
        base = sample(model, None, SamplerConfig(schedule=short_schedule, seed=5))
        hook = GuidanceHook(mode, energy, 0.0, orient_gamma=True, norm_match=True)
        guided = sample(model, None, SamplerConfig(schedule=short_schedule, mode=mode, gamma=0.0, seed=5), guidance=hook)
        np.testing.assert_array_equal(guided.terminal, base.terminal)

    def test_hook_must_match_config(self, short_schedule):
        model = unit_gaussian((2,), short_schedule)
        hook = GuidanceHook("energy_dps", QuadraticEnergy(np.zeros(2)), 1.0)
        with pytest.raises(SamplingError):
            DdimSampler(model, None, SamplerConfig(schedule=short_schedule, mode="energy_dps", gamma=0.5), guidance=hook)

    def test_schedule_must_match_model(self, short_schedule, schedule):
        with pytest.raises(SamplingError):
            DdimSampler(unit_gaussian((2,), schedule), None, SamplerConfig(schedule=short_schedule))

    def test_reprojection_needs_target(self, short_schedule):
        with pytest.raises(SamplingError):
            DdimSampler(unit_gaussian((2,), short_schedule), None, SamplerConfig(schedule=short_schedule, mask_reproject=True))

    def test_unknown_mode(self, short_schedule):
        with pytest.raises(ValueError):
            SamplerConfig(schedule=short_schedule, mode="classifier_free")

    def test_reprojection_keeps_background(self, short_schedule, rng):
        model = unit_gaussian((1, 6, 6), short_schedule)
        x = rng.random((1, 6, 6))
        mask = np.zeros((6, 6))
        mask[1:3, 2:5] = 1.0
        cfg = SamplerConfig(schedule=short_schedule, seed=3, mask_reproject=True)
        z = sample(model, None, cfg, inpaint=InpaintTarget(x, mask)).terminal
        np.testing.assert_array_equal(z * (1.0 - mask), x * (1.0 - mask))

    def test_non_finite_state_reports_step(self, short_schedule):
        model = ExplodingScore((2,), short_schedule)
        with pytest.raises(SamplingError) as info:
            sample(model, None, SamplerConfig(schedule=short_schedule, seed=0))
        assert info.value.step == 5
        assert len(info.value.prefix) == short_schedule.T - 5 + 1

    def test_trajectory_write(self, short_schedule, tmp_path):
        traj = sample(unit_gaussian((2,), short_schedule), None, SamplerConfig(schedule=short_schedule, seed=0))
        traj.write(tmp_path, prefix="run")
        assert (tmp_path / "run_steps.csv").exists()
        assert (tmp_path / "run_states.bin").exists()
        assert (tmp_path / "run_terminal.hdr").exists()


class TestMonteCarlo:
    def test_deterministic_ddim_recovers_data_law(self, schedule):
        # exact unit-Gaussian score, one batched chain per row
        rng = np.random.default_rng(0)
        z = rng.standard_normal(100_000)
        for t in range(schedule.T, 0, -1):
            z = ddim_step(z, t, -z, np.zeros_like(z), schedule)
        assert abs(z.mean()) < 0.05
        assert abs(z.var() - 1.0) < 0.1

    @pytest.mark.slow
    def test_deterministic_ddim_ten_thousand_seeds(self, schedule):
        model = unit_gaussian((1,), schedule)
        terminals = np.array([sample(model, None, SamplerConfig(schedule=schedule, seed=s)).terminal[0] for s in range(10_000)])
        assert abs(terminals.mean()) < 0.05
        assert abs(terminals.var() - 1.0) < 0.1

    def test_quadratic_guidance_pulls_toward_target(self, schedule):
        model = unit_gaussian((2,), schedule)
        target = np.full(2, 2.0)
        energy = QuadraticEnergy(target)
        distances = []
        for gamma in (0.0, 0.5, 1.0, 2.0):
            d = []
            for seed in range(200):
                cfg = SamplerConfig(schedule=schedule, mode="energy_dps", gamma=gamma, seed=seed)
                z = sample(model, None, cfg, guidance=GuidanceHook("energy_dps", energy, gamma)).terminal
                d.append(np.linalg.norm(z - target))
            distances.append(float(np.mean(d)))
        assert distances[0] > distances[1] > distances[2] > distances[3]

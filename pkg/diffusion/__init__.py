"""
diffusion: noise schedules, score models, DDIM sampling, training-free
guidance and score-Jacobian spectra.
"""

from diffusion.errors import (
    GuidanceError,
    SamplingError,
    ScheduleError,
    ScoreModelError,
    SpectraError,
    TrainingDivergedError,
)
from diffusion.schedule import NoiseSchedule, build_schedule, forward_noise
from diffusion.score_models import (
    GaussianMixtureScore,
    LinearScore,
    MlpScore,
    ScoreModel,
    ScoreModelFactory,
    dsm_train,
)
from diffusion.sampler import SamplerConfig, Trajectory, ddim_step, posterior_mean, sample

__all__ = [
    "GuidanceError",
    "SamplingError",
    "ScheduleError",
    "ScoreModelError",
    "SpectraError",
    "TrainingDivergedError",
    "NoiseSchedule",
    "build_schedule",
    "forward_noise",
    "GaussianMixtureScore",
    "LinearScore",
    "MlpScore",
    "ScoreModel",
    "ScoreModelFactory",
    "dsm_train",
    "SamplerConfig",
    "Trajectory",
    "ddim_step",
    "posterior_mean",
    "sample",
]

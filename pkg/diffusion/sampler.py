"""
DDIM Sampler
Reverse DDIM updates, posterior-mean (Tweedie) estimates and guided sampling
with an optional guidance hook. Sampling can be run in segments so a caller
can stop at a step, edit the state and resume on the same random stream.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Union

import numpy as np
import pandas as pd

from diffkernel import ops
from diffusion.errors import SamplingError
from diffusion.schedule import NoiseSchedule, forward_noise
from diffusion.score_models import Condition, ScoreModel
from utils.file_handler import FileHandler
from utils.logger import get_logger

if TYPE_CHECKING:
    from diffusion.guidance import GuidanceHook, GuidedStep

logger = get_logger("sampler")

GUIDANCE_MODE_NAMES = ("none", "energy_dps", "mpgd", "jvpg")


# =========================================================================
# SINGLE-STEP PRIMITIVES
# =========================================================================

def ddim_coefficient(t: int, sched: NoiseSchedule) -> float:
    """
    Score coefficient of the DDIM update:
    (1−ᾱ_t)/sqrt(α_t) − sqrt(1−ᾱ_{t−1}−σ_t²)·sqrt(1−ᾱ_t)

    Raises:
        SamplingError: σ_t² > 1−ᾱ_{t−1}
    """
    a = sched.alpha_at(t)
    ab = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t - 1)
    sigma = sched.sigma_at(t)
    radicand = 1.0 - ab_prev - sigma * sigma
    if radicand < 0.0:
        raise SamplingError(f"sigma_t^2 = {sigma * sigma!r} exceeds 1 - alpha_bar_(t-1) = {1.0 - ab_prev!r}", step=t)
    return (1.0 - ab) / math.sqrt(a) - math.sqrt(radicand) * math.sqrt(1.0 - ab)


def ddim_step(z_t: np.ndarray, t: int, score: np.ndarray, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """z_{t−1} = z_t/sqrt(α_t) + σ_t·eps + coefficient·score, with ᾱ_0 = 1"""
    z_t = np.asarray(z_t, dtype=np.float64)
    if np.shape(score) != z_t.shape or np.shape(eps) != z_t.shape:
        raise SamplingError(
            f"shape mismatch: z_t {z_t.shape}, score {np.shape(score)}, eps {np.shape(eps)}", step=t
        )
    coef = ddim_coefficient(t, sched)
    return z_t / math.sqrt(sched.alpha_at(t)) + sched.sigma_at(t) * np.asarray(eps) + coef * np.asarray(score)


def tweedie(z, score, t: int, sched: NoiseSchedule):
    """(z_t + (1−ᾱ_t)·score) / sqrt(ᾱ_t), traceable in z and score"""
    ab = sched.alpha_bar_at(t)
    if ab <= 0.0:
        raise SamplingError(f"alpha_bar_t = {ab} leaves the posterior mean undefined", step=t)
    return ops.div(ops.add(z, ops.mul(1.0 - ab, score)), math.sqrt(ab))


def posterior_mean_expr(z, t: int, model: ScoreModel, c: Condition, sched: NoiseSchedule):
    """Traceable z_{0|t} = (z_t + (1−ᾱ_t)·s(z_t, t | c)) / sqrt(ᾱ_t)"""
    return tweedie(z, model.score_expr(z, t, c), t, sched)


def posterior_mean(z_t: np.ndarray, t: int, model: ScoreModel, c: Condition, sched: NoiseSchedule) -> np.ndarray:
    """Tweedie estimate of the clean sample"""
    return np.asarray(posterior_mean_expr(np.asarray(z_t, dtype=np.float64), t, model, c, sched))


# =========================================================================
# CONFIGURATION AND RECORDS
# =========================================================================

@dataclass(frozen=True)
class SamplerConfig:
    """Sampling settings; γ = 0 makes every guidance mode coincide with 'none'"""
    schedule: NoiseSchedule
    mode: str = "none"
    gamma: float = 0.0
    seed: int = 0
    mask_reproject: bool = False

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODE_NAMES:
            raise ValueError(f"unknown guidance mode '{self.mode}'. Available: {', '.join(GUIDANCE_MODE_NAMES)}")


@dataclass(frozen=True)
class InpaintTarget:
    """Known image and adversarial mask for per-step re-projection"""
    x: np.ndarray
    mask: np.ndarray  # (H,W) in {0,1}; 1 where content is generated


@dataclass
class StepRecord:
    t: int
    energy: float
    z_norm: float
    guidance_norm: float
    delta_norm: float
    jdelta_norm: float


@dataclass
class Trajectory:
    """States z_T..z_0, per-step posterior means, energies and step records"""
    states: List[np.ndarray] = field(default_factory=list)
    z0_preds: List[np.ndarray] = field(default_factory=list)
    effective_scores: List[np.ndarray] = field(default_factory=list)
    records: List[StepRecord] = field(default_factory=list)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @property
    def energies(self) -> List[float]:
        return [r.energy for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "t": r.t,
                    "energy": r.energy,
                    "z_norm": r.z_norm,
                    "guidance_norm": r.guidance_norm,
                    "delta_norm": r.delta_norm,
                    "jdelta_norm": r.jdelta_norm,
                }
                for r in self.records
            ],
            columns=["t", "energy", "z_norm", "guidance_norm", "delta_norm", "jdelta_norm"],
        )

    def write(self, directory: Union[str, Path], prefix: str = "trajectory"):
        """Per-step CSV plus the stacked states and the terminal sample as raw tensors"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        FileHandler.write_csv(self.to_frame(), directory / f"{prefix}_steps.csv")
        FileHandler.write_tensor(directory / f"{prefix}_states", np.stack(self.states))
        FileHandler.write_tensor(directory / f"{prefix}_terminal", self.terminal)


@dataclass
class SamplerState:
    """Mutable cursor of a running trajectory; z is z_t"""
    z: np.ndarray
    t: int
    rng: np.random.Generator
    trajectory: Trajectory


# =========================================================================
# SAMPLER
# =========================================================================

class DdimSampler:
    """
    Runs guided or unguided DDIM trajectories.

    Every step draws its ε from the seeded stream whatever the mode, plus
    one re-projection draw when mask_reproject is on, so trajectories of
    different modes stay on aligned noise.
    """

    def __init__(
        self,
        model: ScoreModel,
        c: Condition,
        cfg: SamplerConfig,
        guidance: Optional["GuidanceHook"] = None,
        inpaint: Optional[InpaintTarget] = None,
    ):
        from diffusion.guidance import GuidanceHook

        if cfg.schedule is not model.schedule and cfg.schedule.schedule_id != model.schedule.schedule_id:
            raise SamplingError("sampler schedule differs from the model's schedule", step=cfg.schedule.T)
        if cfg.mask_reproject and inpaint is None:
            raise SamplingError("mask_reproject needs an inpainting target", step=cfg.schedule.T)

        if guidance is None:
            guidance = GuidanceHook(mode=cfg.mode, energy=None, gamma=cfg.gamma)
        elif (guidance.mode, guidance.gamma) != (cfg.mode, cfg.gamma):
            raise SamplingError(
                f"guidance hook ({guidance.mode}, γ={guidance.gamma}) disagrees with config ({cfg.mode}, γ={cfg.gamma})",
                step=cfg.schedule.T,
            )
        guidance.validate(model)

        self.model = model
        self.c = model.check_condition(c)
        self.cfg = cfg
        self.guidance = guidance
        self.inpaint = inpaint
        if inpaint is not None:
            self._mask = np.asarray(inpaint.mask, dtype=np.float64)
            self._x = np.asarray(inpaint.x, dtype=np.float64)

    @property
    def sched(self) -> NoiseSchedule:
        return self.cfg.schedule

    def start(self) -> SamplerState:
        """Draw z_T ~ N(0, I) from the seeded stream"""
        rng = np.random.default_rng(self.cfg.seed)
        z = rng.standard_normal(self.model.shape)
        traj = Trajectory(states=[z])
        return SamplerState(z=z, t=self.sched.T, rng=rng, trajectory=traj)

    def replace_state(self, state: SamplerState, z: np.ndarray):
        """Overwrite the current state (and its trajectory entry) in place"""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != state.z.shape:
            raise SamplingError(f"replacement state shape {z.shape} differs from {state.z.shape}", step=state.t)
        state.z = z
        state.trajectory.states[-1] = z

    def run_segment(self, state: SamplerState, stop_t: int = 0) -> SamplerState:
        """
        Advance from state.t down to stop_t

        Raises:
            SamplingError: Non-finite state, with the step index and trajectory prefix
        """
        if not 0 <= stop_t <= state.t:
            raise SamplingError(f"cannot run from t={state.t} to t={stop_t}", step=state.t)

        while state.t > stop_t:
            t = state.t
            eps = state.rng.standard_normal(self.model.shape)
            reproject_noise = state.rng.standard_normal(self.model.shape) if self.cfg.mask_reproject else None

            step = self.guidance.step(state.z, t, self.model, self.c, eps, self.sched)
            z_prev = step.z_prev
            if reproject_noise is not None:
                z_prev = self._reproject(z_prev, t - 1, reproject_noise)

            if not np.all(np.isfinite(z_prev)):
                logger.error("sampling_aborted", step=t, mode=self.guidance.mode, seed=self.cfg.seed)
                raise SamplingError(
                    f"non-finite state at step {t}", step=t, prefix=list(state.trajectory.states)
                )

            traj = state.trajectory
            traj.z0_preds.append(step.z0_pred)
            traj.effective_scores.append(step.effective_score)
            traj.records.append(
                StepRecord(
                    t=t,
                    energy=step.energy,
                    z_norm=float(np.linalg.norm(state.z)),
                    guidance_norm=step.guidance_norm,
                    delta_norm=step.delta_norm,
                    jdelta_norm=step.jdelta_norm,
                )
            )
            traj.states.append(z_prev)
            state.z = z_prev
            state.t = t - 1

        return state

    def _reproject(self, z_prev: np.ndarray, t_prev: int, noise: np.ndarray) -> np.ndarray:
        known = self._x if t_prev == 0 else forward_noise(self._x, t_prev, noise, self.sched)
        return self._mask * z_prev + (1.0 - self._mask) * known

    def run(self) -> Trajectory:
        state = self.run_segment(self.start(), 0)
        logger.debug(
            "trajectory_completed",
            mode=self.guidance.mode,
            gamma=self.guidance.gamma,
            seed=self.cfg.seed,
            terminal_norm=float(np.linalg.norm(state.z)),
        )
        return state.trajectory


def sample(
    model: ScoreModel,
    c: Condition,
    cfg: SamplerConfig,
    guidance: Optional["GuidanceHook"] = None,
    inpaint: Optional[InpaintTarget] = None,
) -> Trajectory:
    """
    Draw one trajectory z_T..z_0

    Args:
        model: Score model
        c: Condition label or None
        cfg: Sampler configuration (schedule, mode, γ, seed, mask_reproject)
        guidance: Hook carrying the energy for guided modes
        inpaint: Known image and mask, required when cfg.mask_reproject

    Returns:
        Trajectory of length T+1
    """
    return DdimSampler(model, c, cfg, guidance=guidance, inpaint=inpaint).run()

"""
Training-free Guidance
Energy-gradient guidance through the posterior mean, the adversarial
perturbation δ, Jacobian-vector-product guidance (JVPG), and the plain
energy (DPS-style) and clean-space (MPGD-style) baselines.

Every mode injects guidance as a modified score fed to the DDIM update:
    energy_dps: s − γ·∇_{z_t} h(z_{0|t})
    jvpg:       s − γ·J_s(z_t)·δ,   δ = ∇_{z_t} L_adv(z_{0|t})
    mpgd:       unguided step from a re-noised, gradient-corrected z_{0|t}
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from diffkernel import ops
from diffkernel.engine import DifferentiableFn, evaluate, jvp, value_and_grad
from diffkernel.tensor import inner
from diffusion.errors import GuidanceError
from diffusion.sampler import GUIDANCE_MODE_NAMES, ddim_step, posterior_mean_expr, tweedie
from diffusion.schedule import NoiseSchedule
from diffusion.score_models import Condition, ScoreModel
from utils.logger import get_logger

logger = get_logger("guidance")

LINEARIZATION_POINTS = ("current", "shifted")


# =========================================================================
# ENERGIES
# =========================================================================

class EnergyFunction(ABC):
    """Scalar energy h(z0) over clean-space tensors"""

    @abstractmethod
    def expr(self, z0):
        """Traceable scalar expression"""
        pass

    def as_fn(self, shape) -> DifferentiableFn:
        return DifferentiableFn(self.expr, [tuple(shape)], name=type(self).__name__)

    def value(self, z0: np.ndarray) -> float:
        return float(evaluate(self.as_fn(np.shape(z0)), z0))


class QuadraticEnergy(EnergyFunction):
    """h(z0) = ½·w·‖z0 − c*‖²"""

    def __init__(self, target: np.ndarray, weight: float = 1.0):
        self.target = np.asarray(target, dtype=np.float64)
        self.weight = float(weight)

    def expr(self, z0):
        return ops.mul(0.5 * self.weight, ops.sq_norm(ops.sub(z0, self.target)))


class ConstantEnergy(EnergyFunction):
    """h(z0) = value"""

    def __init__(self, value: float = 0.0):
        self.constant = float(value)

    def expr(self, z0):
        return ops.add(ops.mul(0.0, ops.reduce_sum(z0)), self.constant)


class AdversarialEnergy(EnergyFunction):
    """
    L_adv(z0) = ‖f_{M_T}(compose(background, z0, M_A)) − λ·f_{M_T}(x)‖²

    The candidate scene keeps the background outside M_A, so the gradient
    outside M_A is exactly zero. The reference depth f_{M_T}(x) is cached and
    recomputed whenever x or M_T is reassigned.
    """

    def __init__(
        self,
        victim,
        x: np.ndarray,
        mask_t: np.ndarray,
        lam: float = 2.0,
        mask_a: Optional[np.ndarray] = None,
        background: Optional[np.ndarray] = None,
    ):
        if lam <= 0.0:
            raise GuidanceError(f"lambda must be positive, got {lam}")
        self.victim = victim
        self.lam = float(lam)
        self.mask_a = None if mask_a is None else np.asarray(mask_a, dtype=np.float64)
        self._background = None if background is None else np.asarray(background, dtype=np.float64)
        self._x = np.asarray(x, dtype=np.float64)
        self._mask_t = np.asarray(mask_t, dtype=np.float64)
        self._refresh()

    def _refresh(self):
        from attack.victim import masked_depth

        self.reference_depth = masked_depth(self.victim, self._x, self._mask_t)
        self._target = self.lam * self.reference_depth

    @property
    def x(self) -> np.ndarray:
        return self._x

    @x.setter
    def x(self, value: np.ndarray):
        self._x = np.asarray(value, dtype=np.float64)
        self._refresh()

    @property
    def mask_t(self) -> np.ndarray:
        return self._mask_t

    @mask_t.setter
    def mask_t(self, value: np.ndarray):
        self._mask_t = np.asarray(value, dtype=np.float64)
        self._refresh()

    @property
    def background(self) -> np.ndarray:
        return self._x if self._background is None else self._background

    def candidate(self, z0):
        from attack.victim import compose_scene

        if self.mask_a is None:
            return z0
        return compose_scene(self.background, z0, self.mask_a)

    def expr(self, z0):
        from attack.victim import adv_loss_expr

        return adv_loss_expr(self.victim, self.candidate(z0), self._mask_t, self._target)


# =========================================================================
# GRADIENTS AND DIRECTIONS
# =========================================================================

def energy_value_and_gradient(
    energy: EnergyFunction,
    z_t: np.ndarray,
    t: int,
    model: ScoreModel,
    c: Condition,
    sched: NoiseSchedule,
) -> Tuple[float, np.ndarray]:
    """
    (h(z_{0|t}), ∇_{z_t} h(z_{0|t})) with the chain rule through the posterior mean

    Raises:
        GuidanceError: Non-finite gradient, carrying the energy value
    """
    fn = DifferentiableFn(
        lambda z: energy.expr(posterior_mean_expr(z, t, model, c, sched)),
        [model.shape],
        name=f"{type(energy).__name__}@posterior_mean",
    )
    value, g = value_and_grad(fn, z_t)
    if not np.isfinite(value) or not np.all(np.isfinite(g)):
        logger.error("energy_gradient_non_finite", t=t, energy=value)
        raise GuidanceError(f"non-finite energy gradient at step {t} (energy {value!r})", energy=value)
    return value, g


def energy_gradient(energy, z_t, t, model, c, sched) -> np.ndarray:
    """∇_{z_t} h(c, z_{0|t})"""
    return energy_value_and_gradient(energy, z_t, t, model, c, sched)[1]


def adv_delta(energy: AdversarialEnergy, z_t, t, model, c, sched) -> np.ndarray:
    """δ = ∇_{z_t} L_adv(x, z_{0|t}, M_T)"""
    return energy_value_and_gradient(energy, z_t, t, model, c, sched)[1]


def jvpg_direction(model: ScoreModel, z_t: np.ndarray, t: int, c: Condition, delta: np.ndarray) -> np.ndarray:
    """J_s(z_t, t | c)·δ"""
    return jvp(model.as_fn(t, c), z_t, delta)


# =========================================================================
# GUIDED STEPS
# =========================================================================

@dataclass
class GuidedStep:
    """One reverse step with its diagnostics"""
    z_prev: np.ndarray
    score: np.ndarray
    effective_score: np.ndarray
    z0_pred: np.ndarray
    energy: float = float("nan")
    guidance_norm: float = 0.0
    delta_norm: float = float("nan")
    jdelta_norm: float = float("nan")
    gamma_eff: float = 0.0
    z0_guided: Optional[np.ndarray] = None


GUIDANCE_MODES: Dict[str, Callable[..., GuidedStep]] = {}


def register_mode(name: str):
    """
    Register a guided-step implementation.
    Usage: @register_mode("my_mode")
    """
    def wrap(fn):
        GUIDANCE_MODES[name] = fn
        return fn
    return wrap


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


@register_mode("none")
def unguided_step(z_t, t, model, c, energy, gamma, eps, sched, **_options) -> GuidedStep:
    s = model.score(z_t, t, c)
    z0 = np.asarray(tweedie(z_t, s, t, sched))
    value = energy.value(z0) if energy is not None else float("nan")
    return GuidedStep(
        z_prev=ddim_step(z_t, t, s, eps, sched),
        score=s,
        effective_score=s,
        z0_pred=z0,
        energy=value,
    )


@register_mode("energy_dps")
def dps_guided_step(z_t, t, model, c, energy, gamma, eps, sched, norm_match: bool = False, **_options) -> GuidedStep:
    s = model.score(z_t, t, c)
    value, g = energy_value_and_gradient(energy, z_t, t, model, c, sched)
    gamma_eff = gamma
    if norm_match and _norm(g) > 0.0:
        gamma_eff = gamma * _norm(s) / _norm(g)
    eff = s - gamma_eff * g
    return GuidedStep(
        z_prev=ddim_step(z_t, t, eff, eps, sched),
        score=s,
        effective_score=eff,
        z0_pred=np.asarray(tweedie(z_t, s, t, sched)),
        energy=value,
        guidance_norm=_norm(gamma_eff * g),
        delta_norm=_norm(g),
        gamma_eff=gamma_eff,
    )


@register_mode("jvpg")
def jvpg_guided_step(
    z_t, t, model, c, energy, gamma, eps, sched,
    orient_gamma: bool = False,
    linearize_at: str = "current",
    norm_match: bool = False,
    **_options,
) -> GuidedStep:
    if linearize_at not in LINEARIZATION_POINTS:
        raise GuidanceError(f"unknown linearization point '{linearize_at}'. Available: {', '.join(LINEARIZATION_POINTS)}")

    s = model.score(z_t, t, c)
    value, delta = energy_value_and_gradient(energy, z_t, t, model, c, sched)
    point = z_t if linearize_at == "current" else z_t + delta
    jdelta = jvpg_direction(model, point, t, c, delta)

    gamma_eff = gamma
    if orient_gamma:
        # γ > 0 always descends the energy
        curvature = inner(jdelta, delta)
        if curvature != 0.0:
            gamma_eff = gamma * math.copysign(1.0, curvature)
    if norm_match:
        jnorm = _norm(jdelta)
        if jnorm > 0.0:
            gamma_eff = gamma_eff * _norm(s) / jnorm

    eff = s - gamma_eff * jdelta
    return GuidedStep(
        z_prev=ddim_step(z_t, t, eff, eps, sched),
        score=s,
        effective_score=eff,
        z0_pred=np.asarray(tweedie(z_t, s, t, sched)),
        energy=value,
        guidance_norm=_norm(gamma_eff * jdelta),
        delta_norm=_norm(delta),
        jdelta_norm=_norm(jdelta),
        gamma_eff=gamma_eff,
    )


@register_mode("mpgd")
def mpgd_guided_step(z_t, t, model, c, energy, gamma, eps, sched, norm_match: bool = False, **_options) -> GuidedStep:
    """
    Clean-space gradient step on z_{0|t}, re-noising with the model-implied
    noise, then an unguided step. With norm_match the clean-space step is as
    long as γ times the score contribution to z_{0|t}.
    """
    ab = sched.alpha_bar_at(t)
    s = model.score(z_t, t, c)
    z0 = np.asarray(tweedie(z_t, s, t, sched))
    value, g0 = value_and_grad(energy.as_fn(model.shape), z0)
    if not np.isfinite(value) or not np.all(np.isfinite(g0)):
        logger.error("energy_gradient_non_finite", t=t, energy=value, mode="mpgd")
        raise GuidanceError(f"non-finite clean-space energy gradient at step {t} (energy {value!r})", energy=value)

    gamma_eff = gamma
    if norm_match and _norm(g0) > 0.0:
        gamma_eff = gamma * _norm(s) * (1.0 - ab) / math.sqrt(ab) / _norm(g0)
    step = gamma_eff * g0
    if not np.any(step):
        # recomposition is the identity
        z_guided, s_guided, z0_guided = z_t, s, z0
    else:
        z0_guided = z0 - step
        eps_hat = -math.sqrt(1.0 - ab) * s
        z_guided = math.sqrt(ab) * z0_guided + math.sqrt(1.0 - ab) * eps_hat
        s_guided = model.score(z_guided, t, c)

    return GuidedStep(
        z_prev=ddim_step(z_guided, t, s_guided, eps, sched),
        score=s,
        effective_score=s_guided,
        z0_pred=z0,
        energy=value,
        guidance_norm=_norm(step),
        delta_norm=_norm(g0),
        gamma_eff=gamma_eff,
        z0_guided=z0_guided,
    )


def baseline_dps_step(z_t, t, model, c, energy, gamma, eps, sched) -> np.ndarray:
    """DDIM step with effective score s − γ·∇_{z_t} h(z_{0|t})"""
    return dps_guided_step(z_t, t, model, c, energy, gamma, eps, sched).z_prev


def jvpg_step(z_t, t, model, c, energy, gamma, eps, sched, **options) -> np.ndarray:
    """DDIM step with effective score s − γ·J_s·δ"""
    return jvpg_guided_step(z_t, t, model, c, energy, gamma, eps, sched, **options).z_prev


def baseline_mpgd_step(z_t, t, model, c, energy, gamma, eps, sched) -> np.ndarray:
    """MPGD-style step: corrected z_{0|t}, re-noised, then unguided"""
    return mpgd_guided_step(z_t, t, model, c, energy, gamma, eps, sched).z_prev


# =========================================================================
# HOOK
# =========================================================================

@dataclass
class GuidanceHook:
    """Packages a guidance mode, its energy and γ for the sampler"""
    mode: str = "none"
    energy: Optional[EnergyFunction] = None
    gamma: float = 0.0
    orient_gamma: bool = False
    linearize_at: str = "current"
    norm_match: bool = False

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODE_NAMES:
            raise GuidanceError(f"unknown guidance mode '{self.mode}'. Available: {', '.join(GUIDANCE_MODE_NAMES)}")
        if self.linearize_at not in LINEARIZATION_POINTS:
            raise GuidanceError(f"unknown linearization point '{self.linearize_at}'")

    @property
    def label(self) -> str:
        """Report label; the clean-space baseline is a simplified surrogate"""
        return "mpgd-style" if self.mode == "mpgd" else self.mode

    def validate(self, model: ScoreModel):
        if self.mode != "none" and self.energy is None:
            raise GuidanceError(f"guidance mode '{self.mode}' needs an energy")
        if self.mode == "jvpg" and not callable(getattr(model, "score_expr", None)):
            raise GuidanceError(f"{type(model).__name__} does not support jvp")

    def options(self) -> Dict:
        return {
            "orient_gamma": self.orient_gamma,
            "linearize_at": self.linearize_at,
            "norm_match": self.norm_match,
        }

    def step(self, z_t, t, model, c, eps, sched) -> GuidedStep:
        return GUIDANCE_MODES[self.mode](z_t, t, model, c, self.energy, self.gamma, eps, sched, **self.options())

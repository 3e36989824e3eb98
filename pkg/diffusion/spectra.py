"""
Jacobian Spectra
Full score Jacobians assembled from JVP columns, matrix-free extremal
singular pairs by power iteration on JᵀJ, and the direction-injection
experiment comparing top and bottom left singular directions.
"""

import copy
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from diffkernel.engine import DifferentiableFn, jvp, vjp
from diffkernel.tensor import unit
from diffusion.errors import SpectraError
from diffusion.sampler import DdimSampler, SamplerConfig
from diffusion.score_models import Condition, ScoreModel
from utils.logger import get_logger

logger = get_logger("spectra")

MAX_FULL_DIM = 1024
DIRECTIONS = ("none", "u_plus", "u_minus")


@dataclass
class SpectralResult:
    """Singular values (descending for full_svd) with unit left/right vectors as rows"""
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    method: str
    converged: bool = True
    iterations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def sigma(self) -> float:
        return float(self.singular_values[0])

    @property
    def u(self) -> np.ndarray:
        return self.left[0]

    @property
    def v(self) -> np.ndarray:
        return self.right[0]


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    """Flip so the entry of largest magnitude is positive"""
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


# =========================================================================
# FULL JACOBIAN
# =========================================================================

def jacobian_of(fn: DifferentiableFn, x: np.ndarray) -> np.ndarray:
    """(m × n) Jacobian of fn at x, column j = J·e_j"""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n > MAX_FULL_DIM:
        raise SpectraError(f"dimension {n} exceeds {MAX_FULL_DIM}; use extremal_singular (power iteration)")
    cols = [np.ravel(jvp(fn, x, unit(x.shape, j))) for j in range(n)]
    return np.column_stack(cols)


def full_jacobian(model: ScoreModel, z_t: np.ndarray, t: int, c: Condition = None) -> np.ndarray:
    """Jacobian of z ↦ s(z, t | c) at z_t, shape (n, n)"""
    return jacobian_of(model.as_fn(t, c), z_t)


def full_svd_of(fn: DifferentiableFn, x: np.ndarray) -> SpectralResult:
    J = jacobian_of(fn, x)
    U, S, Vt = np.linalg.svd(J)
    return SpectralResult(singular_values=S, left=U.T, right=Vt, method="full_svd")


def full_svd(model: ScoreModel, z_t: np.ndarray, t: int, c: Condition = None) -> SpectralResult:
    return full_svd_of(model.as_fn(t, c), z_t)


# =========================================================================
# POWER ITERATION
# =========================================================================

def extremal_singular_of(
    fn: DifferentiableFn,
    x: np.ndarray,
    which: str = "top",
    iters: int = 1000,
    tol: float = 1e-12,
    seed: int = 0,
    margin: Optional[float] = None,
) -> SpectralResult:
    """
    Largest or smallest singular pair of J_fn(x) from JVP/VJP products only

    Args:
        fn: Function whose Jacobian is analysed (square or not)
        x: Linearization point
        which: 'top' or 'bottom'
        iters: Iteration cap, >= 1
        tol: Convergence threshold on successive σ estimates (relative to max(1, σ))
        seed: Seeds the starting vector
        margin: Shift margin for 'bottom'; μ = σ_max² + margin

    Returns:
        SpectralResult with one pair; converged False when the cap was hit
    """
    if which not in ("top", "bottom"):
        raise SpectraError(f"which must be 'top' or 'bottom', got '{which}'")
    if iters < 1:
        raise SpectraError(f"iters must be >= 1, got {iters}")

    x = np.asarray(x, dtype=np.float64)

    def gram(v: np.ndarray) -> np.ndarray:
        return vjp(fn, x, jvp(fn, x, v))

    shift = 0.0
    if which == "bottom":
        top = extremal_singular_of(fn, x, "top", iters=iters, tol=tol, seed=seed)
        shift = top.sigma ** 2 + (0.1 * top.sigma ** 2 + 1e-3 if margin is None else margin)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(x.shape)
    v /= np.linalg.norm(v)

    history: List[float] = []
    converged = False
    sigma_prev = None
    it = 0
    for it in range(1, iters + 1):
        w = gram(v)
        if which == "bottom":
            w = shift * v - w
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            converged = True
            break
        v = w / norm
        sigma = float(np.linalg.norm(jvp(fn, x, v)))
        history.append(sigma)
        if sigma_prev is not None and abs(sigma - sigma_prev) <= tol * max(1.0, sigma):
            converged = True
            break
        sigma_prev = sigma

    v = _canonical_sign(np.ravel(v)).reshape(x.shape)
    Jv = jvp(fn, x, v)
    sigma = float(np.linalg.norm(Jv))
    u = np.ravel(Jv) / sigma if sigma > 0.0 else np.ravel(v).copy()

    if not converged:
        logger.warning("power_iteration_unconverged", which=which, iters=iters, sigma=sigma)

    return SpectralResult(
        singular_values=np.array([sigma]),
        left=u[None, :],
        right=np.ravel(v)[None, :],
        method="power_iteration",
        converged=converged,
        iterations=it,
        history=history,
    )


def extremal_singular(
    model: ScoreModel,
    z_t: np.ndarray,
    t: int,
    c: Condition = None,
    which: str = "top",
    iters: int = 1000,
    tol: float = 1e-12,
    seed: int = 0,
) -> SpectralResult:
    """Top or bottom singular pair of the score Jacobian at (z_t, t | c)"""
    return extremal_singular_of(model.as_fn(t, c), z_t, which=which, iters=iters, tol=tol, seed=seed)


# =========================================================================
# DIRECTION INJECTION
# =========================================================================

@dataclass
class InjectionRecord:
    seed: int
    direction: str
    magnitude: float
    terminal: np.ndarray
    log_density: float


def _require_analytic(model: ScoreModel):
    if not getattr(model, "analytic", False):
        raise SpectraError(f"{type(model).__name__} has no exact log-density; injection needs an analytic model")


def inject_direction(
    model: ScoreModel,
    c: Condition,
    cfg: SamplerConfig,
    t_inject: int,
    direction: np.ndarray,
    magnitude: float,
    label: str = "custom",
) -> InjectionRecord:
    """
    Run unguided to t_inject, add magnitude·direction to z_{t_inject}, finish the trajectory

    Raises:
        SpectraError: Non-analytic model, out-of-range step or non-unit direction
    """
    _require_analytic(model)
    if not 1 <= t_inject <= cfg.schedule.T:
        raise SpectraError(f"t_inject={t_inject} out of range 1..{cfg.schedule.T}")
    direction = np.asarray(direction, dtype=np.float64).reshape(model.shape)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise SpectraError("injection direction must have unit norm")

    sampler = DdimSampler(model, c, cfg)
    state = sampler.run_segment(sampler.start(), t_inject)
    if magnitude != 0.0:
        sampler.replace_state(state, state.z + magnitude * direction)
    state = sampler.run_segment(state, 0)
    return InjectionRecord(
        seed=cfg.seed,
        direction=label,
        magnitude=float(magnitude),
        terminal=state.z,
        log_density=model.log_density(state.z, c),
    )


def run_injection_study(
    model: ScoreModel,
    c: Condition,
    cfg: SamplerConfig,
    seeds: Iterable[int],
    magnitude: float,
    t_inject: Optional[int] = None,
    iters: int = 1000,
    tol: float = 1e-12,
) -> pd.DataFrame:
    """
    Compare u⁺ and u⁻ injections over paired seeds

    For each seed the unguided trajectory is run to t_inject (default T//2),
    the extremal left singular vectors of the score Jacobian are computed at
    that state, and the trajectory is branched three ways (no injection,
    +magnitude·u⁺, +magnitude·u⁻) on identical noise.

    Returns:
        Rows (seed, direction, magnitude, log_density, shift, sigma) ordered by
        seed then direction; shift is the terminal distance from the
        uninjected branch of the same seed
    """
    _require_analytic(model)
    T = cfg.schedule.T
    t_inject = max(1, T // 2) if t_inject is None else t_inject
    if not 1 <= t_inject <= T:
        raise SpectraError(f"t_inject={t_inject} out of range 1..{T}")

    rows = []
    for seed in seeds:
        run_cfg = SamplerConfig(schedule=cfg.schedule, mode="none", gamma=0.0, seed=int(seed))
        sampler = DdimSampler(model, c, run_cfg)
        state = sampler.run_segment(sampler.start(), t_inject)

        top = extremal_singular(model, state.z, t_inject, c, "top", iters=iters, tol=tol, seed=int(seed))
        bottom = extremal_singular(model, state.z, t_inject, c, "bottom", iters=iters, tol=tol, seed=int(seed))
        picks = {
            "none": (None, 0.0),
            "u_plus": (top.u, top.sigma),
            "u_minus": (bottom.u, bottom.sigma),
        }

        base_terminal = None
        for label in DIRECTIONS:
            vec, sigma = picks[label]
            branch = copy.deepcopy(state)
            if vec is not None and magnitude != 0.0:
                sampler.replace_state(branch, branch.z + magnitude * vec.reshape(model.shape))
            branch = sampler.run_segment(branch, 0)
            if base_terminal is None:
                base_terminal = branch.z
            rows.append(
                {
                    "seed": int(seed),
                    "direction": label,
                    "magnitude": float(magnitude if vec is not None else 0.0),
                    "log_density": model.log_density(branch.z, c),
                    "shift": float(np.linalg.norm(branch.z - base_terminal)),
                    "sigma": float(sigma),
                }
            )

    frame = pd.DataFrame(rows, columns=["seed", "direction", "magnitude", "log_density", "shift", "sigma"])
    logger.info("injection_study_completed", seeds=int(frame["seed"].nunique()), t_inject=t_inject, magnitude=magnitude)
    return frame


def summarize_injection(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error of terminal log-density, mean shift and count per direction"""
    by_direction = frame.groupby("direction", sort=False)
    grouped = by_direction["log_density"]
    summary = pd.DataFrame(
        {
            "mean_log_density": grouped.mean(),
            "mean_shift": by_direction["shift"].mean(),
            "stderr": grouped.std(ddof=1) / np.sqrt(grouped.count()),
            "count": grouped.count(),
        }
    )
    return summary.reindex([d for d in DIRECTIONS if d in summary.index]).reset_index()

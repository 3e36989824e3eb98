"""
Noise Schedules
Builds DDIM schedules (α_t, ᾱ_t, σ_t for t = 1..T) and the forward noising process.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from diffkernel.tensor import frozen
from diffusion.errors import ScheduleError
from utils.logger import get_logger

logger = get_logger("schedule")

SCHEDULE_KINDS = ("linear_beta", "cosine")

DEFAULT_KIND = "linear_beta"
DEFAULT_T = 50
DEFAULT_PARAMS = (1e-4, 0.2)
COSINE_DEFAULT_PARAMS = (0.008, 0.0)
MAX_COSINE_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step tables, indexed by t = 1..T.

    Arrays are stored with a leading ᾱ_0 ≡ 1 slot so that
    alpha_bar_at(t - 1) needs no special case at t = 1.
    """
    kind: str
    T: int
    eta: float
    params: Tuple[float, float]
    alpha: np.ndarray        # (T,)  α_1..α_T
    alpha_bar: np.ndarray    # (T,)  ᾱ_1..ᾱ_T
    sigma: np.ndarray        # (T,)  σ_1..σ_T

    def check_step(self, t: int) -> int:
        if not isinstance(t, (int, np.integer)) or not 1 <= t <= self.T:
            raise ScheduleError(f"step t={t} out of range 1..{self.T}")
        return int(t)

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self.check_step(t) - 1])

    def alpha_bar_at(self, t: int) -> float:
        """ᾱ_t with ᾱ_0 ≡ 1"""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self.check_step(t) - 1])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self.check_step(t) - 1])

    @property
    def schedule_id(self) -> str:
        """Stable identifier recorded in model manifests and reports"""
        return f"{self.kind}:T={self.T}:eta={self.eta!r}:params={self.params[0]!r},{self.params[1]!r}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "eta": self.eta,
            "params": list(self.params),
        }


def _linear_betas(T: int, beta_start: float, beta_end: float) -> np.ndarray:
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"linear_beta needs 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if T == 1:
        return np.array([beta_start], dtype=np.float64)
    return np.linspace(beta_start, beta_end, T, dtype=np.float64)


def _cosine_betas(T: int, offset: float, _unused: float) -> np.ndarray:
    if offset <= 0.0:
        raise ScheduleError(f"cosine schedule offset must be positive, got {offset}")

    def f(t: float) -> float:
        return math.cos((t / T + offset) / (1.0 + offset) * math.pi / 2.0) ** 2

    betas = np.array([1.0 - f(t) / f(t - 1) for t in range(1, T + 1)], dtype=np.float64)
    return np.clip(betas, 1e-12, MAX_COSINE_BETA)


def build_schedule(
    kind: str = DEFAULT_KIND,
    T: int = DEFAULT_T,
    eta_ddim: float = 0.0,
    params: Tuple[float, float] = DEFAULT_PARAMS,
) -> NoiseSchedule:
    """
    Build a noise schedule

    Args:
        kind: 'linear_beta' or 'cosine'
        T: Number of steps, >= 1
        eta_ddim: DDIM η in [0, 1]; 0 gives deterministic sampling
        params: (β_start, β_end) for linear_beta, (offset, unused) for cosine

    Returns:
        NoiseSchedule satisfying all schedule invariants

    Raises:
        ScheduleError: On invalid parameters or violated invariants
    """
    if kind not in SCHEDULE_KINDS:
        raise ScheduleError(f"unknown schedule kind '{kind}'. Available: {', '.join(SCHEDULE_KINDS)}")
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ScheduleError(f"T must be a positive integer, got {T!r}")
    if not 0.0 <= eta_ddim <= 1.0:
        raise ScheduleError(f"eta_ddim must lie in [0, 1], got {eta_ddim}")

    p0, p1 = float(params[0]), float(params[1])
    betas = _linear_betas(T, p0, p1) if kind == "linear_beta" else _cosine_betas(T, p0, p1)

    alpha = 1.0 - betas
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])

    # σ_t = η·sqrt((1−ᾱ_{t−1})/(1−ᾱ_t))·sqrt(1−α_t)
    sigma = eta_ddim * np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar)) * np.sqrt(1.0 - alpha)
    if eta_ddim == 0.0:
        sigma = np.zeros(T, dtype=np.float64)

    _validate(alpha, alpha_bar, alpha_bar_prev, sigma)

    sched = NoiseSchedule(
        kind=kind,
        T=int(T),
        eta=float(eta_ddim),
        params=(p0, p1),
        alpha=frozen(alpha),
        alpha_bar=frozen(alpha_bar),
        sigma=frozen(sigma),
    )
    logger.debug("schedule_built", schedule_id=sched.schedule_id, alpha_bar_T=float(alpha_bar[-1]))
    return sched


def _validate(alpha, alpha_bar, alpha_bar_prev, sigma):
    if not np.all((alpha > 0.0) & (alpha < 1.0)):
        raise ScheduleError("alpha_t must lie strictly in (0, 1)")
    if np.any(np.diff(alpha_bar) >= 0.0):
        raise ScheduleError("alpha_bar must be strictly decreasing")
    if np.any(alpha_bar <= 0.0):
        raise ScheduleError("alpha_bar underflowed to zero; shorten T or reduce beta")
    if np.any(np.abs(alpha_bar - alpha_bar_prev * alpha) > 1e-14):
        raise ScheduleError("alpha_bar is not the cumulative product of alpha")
    if np.any(sigma < 0.0) or np.any(sigma ** 2 > 1.0 - alpha_bar_prev + 1e-15):
        raise ScheduleError("sigma_t^2 exceeds 1 - alpha_bar_{t-1}")


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """
    z_t = sqrt(ᾱ_t)·z0 + sqrt(1−ᾱ_t)·eps

    Raises:
        ScheduleError: t outside 1..T or eps shaped unlike z0
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z0.shape:
        raise ScheduleError(f"eps shape {eps.shape} differs from z0 shape {z0.shape}")
    ab = sched.alpha_bar_at(sched.check_step(t))
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


# =========================================================================
# TEXT DUMP / RESTORE
# =========================================================================

HEADER = "t alpha alpha_bar sigma"


def schedule_to_text(sched: NoiseSchedule) -> str:
    """Plain-text table (t, α_t, ᾱ_t, σ_t), 17 significant digits, one row per step"""
    lines = [f"# {sched.schedule_id}", HEADER]
    for t in range(1, sched.T + 1):
        lines.append(
            "%d %.17g %.17g %.17g" % (t, sched.alpha[t - 1], sched.alpha_bar[t - 1], sched.sigma[t - 1])
        )
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> NoiseSchedule:
    """Restore a schedule dumped by schedule_to_text; tables are taken verbatim"""
    kind, T, eta, params = DEFAULT_KIND, None, 0.0, DEFAULT_PARAMS
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            kind, T, eta, params = _parse_id(line[1:].strip())
            continue
        if line == HEADER:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ScheduleError(f"malformed schedule row: '{line}'")
        rows.append([float(p) for p in parts])

    if not rows:
        raise ScheduleError("schedule text holds no rows")
    table = np.array(rows, dtype=np.float64)
    if not np.array_equal(table[:, 0], np.arange(1, len(rows) + 1)):
        raise ScheduleError("schedule rows must be numbered 1..T in order")

    alpha, alpha_bar, sigma = table[:, 1], table[:, 2], table[:, 3]
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    _validate(alpha, alpha_bar, alpha_bar_prev, sigma)

    return NoiseSchedule(
        kind=kind,
        T=len(rows) if T is None else T,
        eta=eta,
        params=params,
        alpha=frozen(alpha),
        alpha_bar=frozen(alpha_bar),
        sigma=frozen(sigma),
    )


def _parse_id(schedule_id: str):
    try:
        kind, t_part, eta_part, params_part = schedule_id.split(":")
        p0, p1 = params_part.split("=", 1)[1].split(",")
        return (
            kind,
            int(t_part.split("=", 1)[1]),
            float(eta_part.split("=", 1)[1]),
            (float(p0), float(p1)),
        )
    except ValueError as e:
        raise ScheduleError(f"malformed schedule id '{schedule_id}'") from e

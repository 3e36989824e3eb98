"""
Salient Region Selection
Partition the scene into candidate patches, find each patch's most
depth-moving perturbation by normalized gradient ascent, score the patches
by the signed mean depth change over the target and rank them.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from attack.errors import SaliencyError
from attack.victim import Box, VictimModel, box_mask, check_mask, masked_depth_expr
from diffkernel import ops
from diffkernel.engine import DifferentiableFn, value_and_grad
from utils.logger import get_logger

logger = get_logger("saliency")


@dataclass
class SrsConfig:
    """
    Salient region selection settings

    Attributes:
        iterations: Ascent steps per patch (T_srs)
        step: Step length η of the normalized update
        k: Regions returned
        clamp: Optional L∞ bound on u
        c_side, s_min, s_max: Patch side rule; s_max None means half the shorter image side
        start_scale: Size of the symmetric-breaking start
        two_sided: Also ascend from the negated start and keep the larger signed score
        seed: Seeds the symmetric-breaking start
    """
    iterations: int = 10
    step: float = 0.05
    k: int = 4
    clamp: Optional[float] = 0.5
    c_side: float = 1.0
    s_min: int = 2
    s_max: Optional[int] = None
    start_scale: float = 1e-6
    two_sided: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise SaliencyError(f"iterations must be >= 0, got {self.iterations}")
        if self.step <= 0.0:
            raise SaliencyError(f"step size must be positive, got {self.step}")
        if self.k < 1:
            raise SaliencyError(f"k must be >= 1, got {self.k}")
        if self.clamp is not None and self.clamp <= 0.0:
            raise SaliencyError(f"clamp must be positive, got {self.clamp}")


@dataclass
class PatchGrid:
    """Candidate patches in raster order"""
    side: int
    stride: int
    height: int
    width: int
    boxes: List[Box] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)

    def mask(self, i: int) -> np.ndarray:
        return box_mask(self.height, self.width, self.boxes[i])

    def origin(self, i: int) -> Tuple[int, int]:
        return self.boxes[i][0], self.boxes[i][1]

    @property
    def masks(self) -> np.ndarray:
        if not self.boxes:
            return np.zeros((0, self.height, self.width))
        return np.stack([self.mask(i) for i in range(len(self))])


@dataclass
class SaliencyResult:
    grid: PatchGrid
    scores: np.ndarray
    objectives: np.ndarray
    ranking: List[int]
    topk: List[int]
    perturbations: List[np.ndarray]

    def topk_masks(self) -> List[np.ndarray]:
        return [self.grid.mask(i) for i in self.topk]

    def union_mask(self, j: Optional[int] = None) -> np.ndarray:
        """Union of the first j selected masks (all of them by default)"""
        chosen = self.topk if j is None else self.topk[:j]
        out = np.zeros((self.grid.height, self.grid.width))
        for i in chosen:
            out = np.maximum(out, self.grid.mask(i))
        return out

    def to_rows(self) -> List[dict]:
        rank_of = {idx: r for r, idx in enumerate(self.ranking)}
        return [
            {
                "index": i,
                "row": self.grid.origin(i)[0],
                "col": self.grid.origin(i)[1],
                "score": float(self.scores[i]),
                "objective": float(self.objectives[i]),
                "rank": rank_of[i],
            }
            for i in range(len(self.grid))
        ]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def patch_side(mask_t: np.ndarray, c_side: float = 1.0, s_min: int = 2, s_max: Optional[int] = None) -> int:
    """clamp(round(c_side·sqrt(area(M_T))), s_min, s_max)"""
    H, W = mask_t.shape
    s_max = min(H, W) // 2 if s_max is None else s_max
    side = _round_half_up(c_side * math.sqrt(float(np.sum(mask_t))))
    return max(s_min, min(side, s_max))


def partition_patches(
    x: np.ndarray,
    mask_t: np.ndarray,
    f: Optional[VictimModel] = None,
    cfg: Optional[SrsConfig] = None,
) -> PatchGrid:
    """
    Tile the image with side×side patches and drop those touching M_T

    Cells are aligned to the top-left corner. When side does not divide H
    or W, the last H mod side rows and W mod side columns are trimmed: no
    candidate covers them, so SRS never selects content there.

    Args:
        x: Image (C,H,W)
        mask_t: Target mask
        f: Victim (unused by the size rule, accepted for a uniform call shape)
        cfg: Patch side settings

    Raises:
        SaliencyError: Image smaller than the minimum patch side
    """
    cfg = cfg or SrsConfig()
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape[-2:]
    if min(H, W) < cfg.s_min:
        raise SaliencyError(f"image {H}x{W} is smaller than the minimum patch side {cfg.s_min}")
    mask_t = check_mask(mask_t, "target", (H, W))

    side = patch_side(mask_t, cfg.c_side, cfg.s_min, cfg.s_max)
    side = min(side, H, W)
    boxes = []
    for r in range(0, H - side + 1, side):
        for c in range(0, W - side + 1, side):
            if not np.any(mask_t[r:r + side, c:c + side]):
                boxes.append((r, c, r + side, c + side))

    grid = PatchGrid(side=side, stride=side, height=H, width=W, boxes=boxes)
    logger.debug("patch_grid_built", side=side, candidates=len(boxes), trimmed_rows=H % side, trimmed_cols=W % side)
    return grid


# =========================================================================
# PER-PATCH OPTIMIZATION
# =========================================================================

def _depth_change_fn(x: np.ndarray, mask_t: np.ndarray, f: VictimModel) -> DifferentiableFn:
    """u ↦ ‖f_{M_T}(x+u) − f_{M_T}(x)‖²"""
    reference = np.asarray(masked_depth_expr(f, x, mask_t))
    return DifferentiableFn(
        lambda u: ops.sq_norm(ops.sub(masked_depth_expr(f, ops.add(x, u), mask_t), reference)),
        [x.shape],
        name="srs_objective",
    )


def _project(u: np.ndarray, x: np.ndarray, support: np.ndarray, clamp: Optional[float]) -> np.ndarray:
    if clamp is not None:
        u = np.clip(u, -clamp, clamp)
    u = np.clip(x + u, 0.0, 1.0) - x
    return u * support


def _ascend(objective: DifferentiableFn, x, support, start, cfg: SrsConfig) -> np.ndarray:
    u = np.zeros_like(x)
    for it in range(cfg.iterations):
        # the objective is flat at u = 0; the first gradient is taken at the start point
        point = start if it == 0 else u
        _, g = value_and_grad(objective, point)
        g = g * support
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            logger.debug("srs_gradient_vanished", iteration=it)
            break
        u = _project(u + cfg.step * g / norm, x, support, cfg.clamp)
    return u


def optimize_patch(
    x: np.ndarray,
    mask_t: np.ndarray,
    mask_p: np.ndarray,
    f: VictimModel,
    cfg: Optional[SrsConfig] = None,
    patch_index: int = 0,
) -> np.ndarray:
    """
    Perturbation u supported on M_P that most moves the target depth

    Normalized gradient ascent u ← u + η·g/‖g‖ on ‖f_{M_T}(x+u) − f_{M_T}(x)‖,
    with g masked to M_P, an optional L∞ clamp and x+u kept in [0,1]. A zero
    gradient stops early.

    Raises:
        SaliencyError: M_P overlaps M_T
    """
    cfg = cfg or SrsConfig()
    x = np.asarray(x, dtype=np.float64)
    mask_t = check_mask(mask_t, "target", x.shape[-2:])
    mask_p = check_mask(mask_p, "adversarial", x.shape[-2:])
    if np.any(mask_t * mask_p):
        raise SaliencyError("patch overlaps the target mask")
    if cfg.iterations == 0:
        return np.zeros_like(x)

    support = np.broadcast_to(mask_p, x.shape)
    objective = _depth_change_fn(x, mask_t, f)
    rng = np.random.default_rng([cfg.seed, patch_index])
    start = cfg.start_scale * rng.standard_normal(x.shape) * support

    u = _ascend(objective, x, support, start, cfg)
    if cfg.two_sided:
        u_neg = _ascend(objective, x, support, -start, cfg)
        if region_score(x, mask_t, u_neg, f) > region_score(x, mask_t, u, f):
            u = u_neg
    return u


def patch_objective(x: np.ndarray, mask_t: np.ndarray, u: np.ndarray, f: VictimModel) -> float:
    """‖f_{M_T}(x+u) − f_{M_T}(x)‖₂"""
    change = f.depth(x + u) - f.depth(x)
    return float(np.linalg.norm(change * mask_t))


def region_score(x: np.ndarray, mask_t: np.ndarray, u: np.ndarray, f: VictimModel) -> float:
    """Mean over M_T of the signed depth change f(x+u) − f(x)"""
    x = np.asarray(x, dtype=np.float64)
    mask_t = np.asarray(mask_t, dtype=np.float64)
    change = (f.depth(x + u) - f.depth(x)) * mask_t
    return float(np.sum(change) / np.sum(mask_t))


# =========================================================================
# RANKING
# =========================================================================

def select_topk(scores: Sequence[float], k: int, origins: Optional[Sequence[Tuple[int, int]]] = None) -> List[int]:
    """
    Indices of the k best scores, descending, ties by (row, col) of the origin

    Without origins the index order is used, which is raster order for a PatchGrid.
    """
    n = len(scores)
    if not 1 <= k <= n:
        raise SaliencyError(f"k={k} out of range for {n} candidates")
    keys = origins if origins is not None else [(i, 0) for i in range(n)]
    order = sorted(range(n), key=lambda i: (-float(scores[i]), keys[i][0], keys[i][1]))
    return order[:k]


def random_regions(grid: PatchGrid, k: int, seed: int = 0) -> List[int]:
    """Uniformly random k distinct candidates, for the ablation without saliency"""
    if not 1 <= k <= len(grid):
        raise SaliencyError(f"k={k} out of range for {len(grid)} candidates")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.choice(len(grid), size=k, replace=False)]


def salient_region_selection(
    x: np.ndarray,
    mask_t: np.ndarray,
    f: VictimModel,
    cfg: Optional[SrsConfig] = None,
) -> SaliencyResult:
    """
    Score every candidate patch and keep the top-k

    Raises:
        SaliencyError: No candidate patch, or k exceeds the candidate count
    """
    cfg = cfg or SrsConfig()
    x = np.asarray(x, dtype=np.float64)
    grid = partition_patches(x, mask_t, f, cfg)
    if len(grid) == 0:
        logger.error("srs_no_candidates", side=grid.side)
        raise SaliencyError("no candidates: every patch overlaps the target mask")
    if cfg.k > len(grid):
        raise SaliencyError(f"k={cfg.k} exceeds the {len(grid)} candidate patches")

    scores = np.zeros(len(grid))
    objectives = np.zeros(len(grid))
    perturbations = []
    for i in range(len(grid)):
        u = optimize_patch(x, mask_t, grid.mask(i), f, cfg, patch_index=i)
        scores[i] = region_score(x, mask_t, u, f)
        objectives[i] = patch_objective(x, mask_t, u, f)
        perturbations.append(u)
        logger.debug("srs_patch_scored", index=i, origin=list(grid.origin(i)), score=scores[i], objective=objectives[i])

    origins = [grid.origin(i) for i in range(len(grid))]
    ranking = select_topk(scores, len(grid), origins)
    result = SaliencyResult(
        grid=grid,
        scores=scores,
        objectives=objectives,
        ranking=ranking,
        topk=ranking[:cfg.k],
        perturbations=perturbations,
    )
    logger.info("srs_completed", candidates=len(grid), topk=result.topk, best_score=float(scores[ranking[0]]))
    return result


def saliency_heatmap(result: SaliencyResult) -> np.ndarray:
    """(H,W) map with each patch filled by its score, min-max normalized to [0,1]"""
    grid = result.grid
    heat = np.zeros((grid.height, grid.width))
    if len(grid) == 0:
        return heat
    lo, hi = float(np.min(result.scores)), float(np.max(result.scores))
    span = hi - lo
    for i, (r0, c0, r1, c1) in enumerate(grid.boxes):
        heat[r0:r1, c0:c1] = (result.scores[i] - lo) / span if span > 0.0 else 1.0
    return heat

"""
Toy Scenes
Seeded procedural scenes: a class template plus pixel noise, a target box
on the road, and (for planted victims) the ground-truth source patches.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from attack.errors import VictimError
from attack.victim import Box, PlantSpec, Scene, VictimModel, box_mask, make_victim
from config.base_config import SceneSpec, VictimSpec
from diffusion.score_models import scene_templates
from utils.logger import get_logger

logger = get_logger("scenes")


@dataclass
class ToyScene:
    """One ensemble member with its victim"""
    seed: int
    label: int
    x: np.ndarray
    mask_t: np.ndarray
    target_box: Box
    victim: VictimModel
    planted_box: Optional[Box] = None
    secondary_boxes: List[Box] = field(default_factory=list)

    @property
    def scene(self) -> Scene:
        return Scene(self.x, self.mask_t, np.zeros_like(self.mask_t))

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "label": self.label,
            "target_box": list(self.target_box),
            "planted_box": None if self.planted_box is None else list(self.planted_box),
            "victim": self.victim.describe(),
        }


def grid_cells(height: int, width: int, side: int) -> List[Box]:
    """Aligned side×side cells in raster order"""
    return [
        (r, c, r + side, c + side)
        for r in range(0, height - side + 1, side)
        for c in range(0, width - side + 1, side)
    ]


def make_toy_scene(seed: int, scene_spec: Optional[SceneSpec] = None, victim_spec: Optional[VictimSpec] = None) -> ToyScene:
    """
    Build the scene and victim for one ensemble seed

    The target box is a grid-aligned cell in the lower (road) half. Planted
    victims draw their primary source and the secondary sources from the
    remaining cells.
    """
    scene_spec = scene_spec or SceneSpec()
    victim_spec = victim_spec or VictimSpec()
    side = scene_spec.target_side
    H, W = scene_spec.height, scene_spec.width
    if scene_spec.channels != 1:
        raise VictimError("toy scenes are grayscale (channels = 1)")
    if side < 1 or 2 * side > H or side > W:
        raise VictimError(f"target side {side} does not fit a {H}x{W} scene")

    rng = np.random.default_rng(seed)
    label = int(rng.integers(scene_spec.n_classes))
    template = scene_templates(scene_spec.n_classes, H, W)[label]
    x = np.clip(template + scene_spec.noise * rng.standard_normal(template.shape), 0.0, 1.0)

    cells = grid_cells(H, W, side)
    road = [b for b in cells if b[0] >= H // 2]
    target_box = road[int(rng.integers(len(road)))]
    mask_t = box_mask(H, W, target_box)

    plant = None
    planted_box = None
    secondary: List[Box] = []
    if victim_spec.planted:
        free = [b for b in cells if b != target_box]
        order = rng.permutation(len(free))
        planted_box = free[int(order[0])]
        secondary = [free[int(i)] for i in order[1:1 + victim_spec.n_secondary]]
        plant = PlantSpec(
            source_box=planted_box,
            target_mask=mask_t,
            gain=victim_spec.planted_gain,
            secondary_boxes=tuple(secondary),
            secondary_ratio=victim_spec.secondary_ratio,
        )

    victim = make_victim(
        victim_spec.kind,
        seed=int(rng.integers(2 ** 31)),
        channels=1,
        height=H,
        width=W,
        kernel=victim_spec.kernel,
        offset=victim_spec.offset,
        gain=victim_spec.gain,
        plant=plant,
    )
    toy = ToyScene(
        seed=seed, label=label, x=x, mask_t=mask_t, target_box=target_box,
        victim=victim, planted_box=planted_box, secondary_boxes=secondary,
    )
    logger.debug("toy_scene_built", **toy.describe())
    return toy


def toy_ensemble(seeds, scene_spec: Optional[SceneSpec] = None, victim_spec: Optional[VictimSpec] = None) -> List[ToyScene]:
    return [make_toy_scene(int(s), scene_spec, victim_spec) for s in seeds]

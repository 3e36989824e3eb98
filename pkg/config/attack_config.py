"""
Attack Configuration
One flat key-value mapping (config file plus flag overrides) turned into
section dataclasses, validated against schemas/attack_config_schema.json.
"""

import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from config.base_config import GuidanceSettings, ModelSpec, SceneSpec, ScheduleConfig, SrsSettings, VictimSpec
from utils.file_handler import FileHandler
from utils.logger import get_logger
from utils.validator import ConfigValidator

logger = get_logger("config")

MULTI_REGION_MODES = ("joint", "sequential")
SELECTION_MODES = ("srs", "random")


def derive_seed(seed: int, *labels: Union[str, int]) -> int:
    """
    Sub-seed for a labelled consumer of randomness

    Every random stream of a run is derived from the single run seed, so
    changing one consumer never shifts another.
    """
    words = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        words.append(zlib.crc32(str(label).encode("utf-8")))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass
class AttackConfig:
    """Every setting of an attack, comparison, ensemble or spectrum run"""
    seed: int = 0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    victim: VictimSpec = field(default_factory=VictimSpec)
    scene: SceneSpec = field(default_factory=SceneSpec)
    srs: SrsSettings = field(default_factory=SrsSettings)
    guidance: GuidanceSettings = field(default_factory=GuidanceSettings)
    k: int = 4
    selection: str = "srs"
    multi_region: str = "joint"
    mask_reproject: bool = True
    quantize_roundtrip: bool = False
    scenes: int = 100
    image_path: str = ""
    mask_path: str = ""
    label: int = -1
    output_dir: str = "out"

    # flat key → (section, attribute); section None means a top-level field
    FLAT_KEYS = {
        "seed": (None, "seed"),
        "schedule_kind": ("schedule", "kind"),
        "T": ("schedule", "T"),
        "eta_ddim": ("schedule", "eta_ddim"),
        "beta_start": ("schedule", "beta_start"),
        "beta_end": ("schedule", "beta_end"),
        "cosine_offset": ("schedule", "cosine_offset"),
        "model_kind": ("model", "kind"),
        "model_variance": ("model", "variance"),
        "model_path": ("model", "path"),
        "victim_kind": ("victim", "kind"),
        "victim_kernel": ("victim", "kernel"),
        "victim_offset": ("victim", "offset"),
        "victim_gain": ("victim", "gain"),
        "planted": ("victim", "planted"),
        "planted_gain": ("victim", "planted_gain"),
        "n_secondary": ("victim", "n_secondary"),
        "secondary_ratio": ("victim", "secondary_ratio"),
        "n_classes": ("scene", "n_classes"),
        "channels": ("scene", "channels"),
        "height": ("scene", "height"),
        "width": ("scene", "width"),
        "target_side": ("scene", "target_side"),
        "scene_noise": ("scene", "noise"),
        "srs_iterations": ("srs", "iterations"),
        "srs_step": ("srs", "step"),
        "srs_clamp": ("srs", "clamp"),
        "c_side": ("srs", "c_side"),
        "s_min": ("srs", "s_min"),
        "s_max": ("srs", "s_max"),
        "start_scale": ("srs", "start_scale"),
        "two_sided": ("srs", "two_sided"),
        "mode": ("guidance", "mode"),
        "gamma": ("guidance", "gamma"),
        "lam": ("guidance", "lam"),
        "orient_gamma": ("guidance", "orient_gamma"),
        "linearize_at": ("guidance", "linearize_at"),
        "norm_match": ("guidance", "norm_match"),
        "k": (None, "k"),
        "selection": (None, "selection"),
        "multi_region": (None, "multi_region"),
        "mask_reproject": (None, "mask_reproject"),
        "quantize_roundtrip": (None, "quantize_roundtrip"),
        "scenes": (None, "scenes"),
        "image_path": (None, "image_path"),
        "mask_path": (None, "mask_path"),
        "label": (None, "label"),
        "output_dir": (None, "output_dir"),
    }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "AttackConfig":
        """
        Build from a flat mapping

        Raises:
            ValidationError: Unknown key or value outside the schema
        """
        data = dict(data)
        ConfigValidator.validate(data, "attack_config")
        cfg = cls()
        sections: Dict[str, Dict[str, Any]] = {}
        for key, value in data.items():
            section, attr = cls.FLAT_KEYS[key]
            if section is None:
                setattr(cfg, attr, value)
            else:
                sections.setdefault(section, {})[attr] = value
        for section, values in sections.items():
            setattr(cfg, section, replace(getattr(cfg, section), **values))
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        """Flat mapping in key order; the report's config echo"""
        out = {}
        for key, (section, attr) in self.FLAT_KEYS.items():
            owner = self if section is None else getattr(self, section)
            out[key] = getattr(owner, attr)
        return out

    def with_overrides(self, **overrides) -> "AttackConfig":
        """Copy with flat-key overrides applied and revalidated"""
        merged = self.to_dict()
        merged.update(overrides)
        return AttackConfig.from_mapping(merged)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> AttackConfig:
    """
    Merge a key-value config file with flag overrides (flags win)

    Args:
        path: Optional YAML/JSON key-value file
        overrides: Flag values; None entries are ignored

    Returns:
        Validated AttackConfig
    """
    data: Dict[str, Any] = {}
    if path is not None:
        data.update(FileHandler.load_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    cfg = AttackConfig.from_mapping(data)
    logger.info("config_loaded", path=None if path is None else str(path), overrides=sorted(k for k, v in (overrides or {}).items() if v is not None))
    return cfg

"""
Configuration Package
Section dataclasses and the flat key-value attack configuration
"""

from config.attack_config import AttackConfig, derive_seed, load_config
from config.base_config import GuidanceSettings, ModelSpec, SceneSpec, ScheduleConfig, SrsSettings, VictimSpec

__all__ = [
    "AttackConfig",
    "derive_seed",
    "load_config",
    "GuidanceSettings",
    "ModelSpec",
    "SceneSpec",
    "ScheduleConfig",
    "SrsSettings",
    "VictimSpec",
]

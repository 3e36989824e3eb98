"""Shared fixtures. Logs go to a throwaway directory for the whole session."""

import os
import tempfile

os.environ.setdefault("ADVGEN_LOG_DIR", tempfile.mkdtemp(prefix="advgen-logs-"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from attack.scenes import make_toy_scene  # noqa: E402
from attack.victim import box_mask, make_victim  # noqa: E402
from config.attack_config import AttackConfig  # noqa: E402
from config.base_config import VictimSpec  # noqa: E402
from diffusion.schedule import build_schedule  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def schedule():
    return build_schedule("linear_beta", 50, 0.0, (1e-4, 0.2))


@pytest.fixture
def short_schedule():
    return build_schedule("linear_beta", 10, 0.0, (1e-4, 0.2))


@pytest.fixture
def target_mask():
    """4×4 target box in the lower half of a 16×16 image"""
    return box_mask(16, 16, (8, 4, 12, 8))


@pytest.fixture
def victim():
    return make_victim("patch_pool", seed=7)


@pytest.fixture
def toy():
    return make_toy_scene(11)


@pytest.fixture
def unplanted_toy():
    return make_toy_scene(11, victim_spec=VictimSpec(planted=False))


@pytest.fixture
def fast_config(tmp_path):
    """Small attack: short schedule, two regions, few SRS iterations, norm-matched JVPG"""
    return AttackConfig.from_mapping(
        {
            "seed": 3,
            "T": 8,
            "k": 2,
            "srs_iterations": 3,
            "gamma": -0.5,
            "norm_match": True,
            "output_dir": str(tmp_path / "out"),
        }
    )

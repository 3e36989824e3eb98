"""Procedural toy scenes and planted ground truth."""

import numpy as np
import pytest

from attack.errors import VictimError
from attack.scenes import grid_cells, make_toy_scene, toy_ensemble
from config.base_config import SceneSpec, VictimSpec


def test_grid_cells_raster_order():
    assert grid_cells(8, 8, 4) == [(0, 0, 4, 4), (0, 4, 4, 8), (4, 0, 8, 4), (4, 4, 8, 8)]


class TestToyScene:
    def test_same_seed_same_scene(self):
        a, b = make_toy_scene(4), make_toy_scene(4)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.target_box == b.target_box
        assert a.planted_box == b.planted_box
        np.testing.assert_array_equal(a.victim.params["kernel"], b.victim.params["kernel"])

    def test_geometry(self, toy):
        assert toy.x.shape == (1, 16, 16)
        assert 0.0 <= toy.x.min() and toy.x.max() <= 1.0
        r0, c0, r1, c1 = toy.target_box
        assert r0 >= 8 and (r1 - r0, c1 - c0) == (4, 4)
        assert r0 % 4 == 0 and c0 % 4 == 0
        assert toy.mask_t.sum() == 16

    def test_planted_sources(self, toy):
        assert toy.victim.planted
        assert toy.planted_box != toy.target_box
        assert len(toy.secondary_boxes) == 3
        assert len({toy.planted_box, toy.target_box, *toy.secondary_boxes}) == 5

    def test_unplanted(self, unplanted_toy):
        assert not unplanted_toy.victim.planted
        assert unplanted_toy.planted_box is None
        assert unplanted_toy.secondary_boxes == []

    def test_scene_has_empty_object_mask(self, toy):
        scene = toy.scene
        assert not np.any(scene.mask_a)
        assert scene.z is None

    def test_describe(self, toy):
        info = toy.describe()
        assert info["seed"] == 11
        assert info["planted_box"] == list(toy.planted_box)

    @pytest.mark.parametrize("spec", [SceneSpec(channels=3), SceneSpec(target_side=9)])
    def test_invalid_geometry(self, spec):
        with pytest.raises(VictimError):
            make_toy_scene(0, spec)

    def test_ensemble(self):
        members = toy_ensemble(range(3), victim_spec=VictimSpec(kind="tiny_conv"))
        assert [m.seed for m in members] == [0, 1, 2]
        assert all(m.victim.kind == "tiny_conv" for m in members)

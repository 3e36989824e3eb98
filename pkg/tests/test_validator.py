"""Schema checks for attack configs and model manifests."""

import pytest

from utils.validator import ConfigValidator, ValidationError


def _manifest(**overrides):
    manifest = {
        "kind": "mlp",
        "shape": [1, 4, 4],
        "widths": [32, 32],
        "n_classes": 0,
        "n_freq": 4,
        "seed": 0,
        "schedule_id": "linear_beta-T50",
        "weights": ["w0", "b0"],
    }
    manifest.update(overrides)
    return manifest


def test_valid_manifest():
    assert ConfigValidator.validate(_manifest(), "model_manifest") == (True, None)


def test_error_names_the_path():
    ok, error = ConfigValidator.validate(_manifest(shape=[1, 0]), "model_manifest", silent=True)
    assert not ok
    assert "'shape.1'" in error
    assert "rule: minimum" in error


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        ConfigValidator.validate({"T": 10, "warp": 9}, "attack_config")


def test_unknown_kind():
    ok, error = ConfigValidator.validate({}, "optimizer", silent=True)
    assert not ok
    assert error.startswith("Unknown config kind: optimizer")


def test_schemas_are_cached():
    first = ConfigValidator.load_schema("attack_config_schema.json")
    assert ConfigValidator.load_schema("attack_config_schema.json") is first


def test_missing_schema_file():
    with pytest.raises(FileNotFoundError):
        ConfigValidator.load_schema("absent_schema.json")

"""Layered config merge semantics."""

import json

import numpy as np
import pytest

from pollisim.config import (
    PipelineConfig,
    config_to_dict,
    load_config,
    merge_config,
    save_config,
)


def test_defaults_round_trip(tmp_path):
    cfg = PipelineConfig()
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert config_to_dict(back) == config_to_dict(cfg)


def test_partial_override_touches_one_knob():
    cfg = merge_config(PipelineConfig(), {"mission": {"standoff_m": 0.25}})
    assert cfg.mission.standoff_m == 0.25
    assert cfg.mission.margin_m == PipelineConfig().mission.margin_m
    assert cfg.scene == PipelineConfig().scene


def test_nested_and_typed_overrides():
    cfg = merge_config(PipelineConfig(), {
        "seed": 9,
        "scene": {"x_range": [-0.2, 0.2], "n_clusters": 4},
        "mission": {"sprayer": {"duration_s": 1.0},
                    "normals": {"viewpoint": [0.0, -0.7, 1.0]}},
    })
    assert cfg.seed == 9
    assert cfg.scene.x_range == (-0.2, 0.2)
    assert isinstance(cfg.mission.normals.viewpoint, np.ndarray)
    assert cfg.mission.sprayer.duration_s == 1.0
    # untouched sibling fields keep defaults
    assert cfg.mission.sprayer.voltage == 24.0


def test_unknown_keys_are_rejected():
    with pytest.raises(ValueError, match="warp"):
        merge_config(PipelineConfig(), {"mission": {"warp_drive": 1}})
    with pytest.raises(ValueError):
        merge_config(PipelineConfig(), {"nope": {}})


def test_file_then_override_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5, "mission": {"standoff_m": 0.3}}))
    cfg = load_config(path, overrides={"seed": 11})
    assert cfg.seed == 11
    assert cfg.mission.standoff_m == 0.3

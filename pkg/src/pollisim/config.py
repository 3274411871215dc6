"""Layered run configuration.

A run is fully described by a scene recipe, mission parameters and the
run seed. Defaults live in the dataclasses themselves; a JSON config
file overrides any subset; explicit CLI flags override the file. The
merge is recursive, so a file carrying only {"mission": {"standoff_m":
0.25}} changes exactly that one knob.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mission import MissionParams
from .orchard import SceneConfig


@dataclass(frozen=True)
class PipelineConfig:
    scene: SceneConfig = SceneConfig()
    mission: MissionParams = MissionParams()
    seed: int = 0


def _to_jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_jsonable(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def config_to_dict(config) -> dict:
    return _to_jsonable(config)


def merge_config(base, overrides: dict):
    """Rebuild a dataclass with overrides applied recursively.

    Unknown keys are an error rather than silently ignored; the value
    shape is coerced to match the field being replaced (tuples stay
    tuples, array fields become arrays).
    """
    if not isinstance(overrides, dict):
        raise ValueError(f"expected an object for {type(base).__name__}")
    fields = {f.name: f for f in dataclasses.fields(base)}
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ValueError(
            f"unknown {type(base).__name__} keys: {', '.join(sorted(unknown))}")
    changes = {}
    for key, raw in overrides.items():
        current = getattr(base, key)
        if dataclasses.is_dataclass(current) and not isinstance(current, type):
            changes[key] = merge_config(current, raw)
        elif isinstance(current, np.ndarray):
            changes[key] = np.asarray(raw, dtype=float)
        elif isinstance(current, tuple):
            changes[key] = tuple(raw)
        elif isinstance(current, bool):
            changes[key] = bool(raw)
        elif isinstance(current, int) and not isinstance(raw, bool):
            changes[key] = int(raw)
        elif isinstance(current, float):
            changes[key] = float(raw)
        else:
            changes[key] = raw
    return dataclasses.replace(base, **changes)


def load_config(path=None, overrides: dict = None) -> PipelineConfig:
    """Defaults, then the JSON file, then explicit overrides."""
    config = PipelineConfig()
    if path is not None:
        data = json.loads(Path(path).read_text())
        config = merge_config(config, data)
    if overrides:
        config = merge_config(config, overrides)
    return config


def save_config(config: PipelineConfig, path):
    Path(path).write_text(json.dumps(config_to_dict(config), sort_keys=True,
                                     indent=2) + "\n")

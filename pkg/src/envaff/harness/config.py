"""Versioned YAML run configuration with field-path validation.

Every key is optional; missing keys take the defaults in ``DEFAULTS``.  Unknown
keys and wrongly typed values raise ``ConfigError`` naming the dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from ..errors import ConfigError

CONFIG_VERSION = 1

DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "scenes": {"count": 10, "occluders": 1, "pool": "train", "n_out": 2048},
    "dataset": {
        "n_scenes": 200,
        "quotas": {"push": [90, 90], "pull": [30, 250]},
        "handle_fraction": 0.5,
        "n_out": 2048,
        "sample_budget": 100000,
        "validation_scenes": 50,
        "validation_quotas": {"push": [30, 30], "pull": [10, 80]},
    },
    "test": {"n_scenes": 100, "occluders": [2, 4], "records_per_scene": 8, "n_out": 2048},
    "field": {"k_significant": 256, "include_target_points": False, "coords": False, "robot_height": 0.0},
    "model": {"width": 64, "feature_dim": 128, "scene_hidden": [64, 64], "predictor_hidden": 128},
    "train": {
        "action": "push",
        "epochs": 30,
        "batch_size": 30,
        "learning_rate": 0.001,
        "alpha": 2.0,
        "lambda_cl": 1.0,
        "ablation": "none",
    },
    "eval": {"threshold": 0.5, "proposals_per_scene": 10, "sma_scenes": 20},
    "protocol": {"seeds": [0, 1, 2]},
    "oracle": {
        "r_min": 0.25, "r_max": 1.05, "r_ee": 0.04, "d_approach": 0.08, "push_travel": 0.10,
        "pull_travel": 0.10, "theta_min_prismatic": 0.03, "theta_min_revolute": 0.1, "ee_height": 0.5,
        "step": 0.01, "sweep_states": 8,
    },
}

CHOICES = {
    "scenes.pool": ("train", "novel"),
    "train.action": ("push", "pull"),
    "train.ablation": ("none", "no-of", "no-cl"),
}
# lists of any non-empty length
VARIABLE_LISTS = ("protocol.seeds", "model.scene_hidden")
POSITIVE = {
    "scenes.count", "scenes.n_out", "dataset.n_scenes", "dataset.n_out", "dataset.sample_budget", "dataset.validation_scenes", "test.n_scenes",
    "test.records_per_scene", "test.n_out", "field.k_significant", "model.width", "model.feature_dim",
    "model.predictor_hidden", "train.batch_size", "train.learning_rate", "train.alpha",
    "eval.proposals_per_scene", "eval.sma_scenes",
}


def _check(value, default, path: str):
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(path, "expected a mapping")
        if path in ("dataset.quotas", "dataset.validation_quotas"):
            return {k: _check(v, [0, 0], f"{path}.{k}") for k, v in value.items()}
        out = {}
        for k, v in value.items():
            sub = f"{path}.{k}" if path else k
            if k not in default:
                raise ConfigError(sub, "unknown key")
            out[k] = _check(v, default[k], sub)
        return out
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        if path in CHOICES and value not in CHOICES[path]:
            raise ConfigError(path, f"expected one of {', '.join(CHOICES[path])}")
    elif path in VARIABLE_LISTS:
        if not isinstance(value, list) or not value:
            raise ConfigError(path, "expected a non-empty list of integers")
        value = [_check(v, 0, f"{path}[{i}]") for i, v in enumerate(value)]
        if path == "model.scene_hidden" and min(value) <= 0:
            raise ConfigError(path, "layer widths must be positive")
    elif isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(path, f"expected a list of {len(default)} items")
        value = [_check(v, d, f"{path}[{i}]") for i, (v, d) in enumerate(zip(value, default))]
    if path in POSITIVE and value <= 0:
        raise ConfigError(path, "must be positive")
    return value


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and not k.endswith("quotas"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Defaults merged with ``raw`` after checking every key and value."""
    if raw is None:
        raw = {}
    checked = _check(raw, DEFAULTS, "")
    if checked.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported config version {checked['version']}, expected {CONFIG_VERSION}")
    cfg = _merge(DEFAULTS, checked)
    lo, hi = cfg["test"]["occluders"]
    if not 1 <= lo <= hi:
        raise ConfigError("test.occluders", "expected 1 <= min <= max")
    if cfg["train"]["batch_size"] % 3:
        raise ConfigError("train.batch_size", "must be a multiple of 3 (whole triplets)")
    if not 0 < cfg["eval"]["threshold"] < 1:
        raise ConfigError("eval.threshold", "must lie in (0, 1)")
    if not 0 <= cfg["dataset"]["handle_fraction"] <= 1:
        raise ConfigError("dataset.handle_fraction", "must lie in [0, 1]")
    if cfg["train"]["lambda_cl"] < 0 or cfg["train"]["epochs"] < 0:
        raise ConfigError("train", "lambda_cl and epochs must be non-negative")
    return cfg


def load(path=None) -> dict:
    if path is None:
        return validate({})
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from exc
    return validate(raw)


def digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]

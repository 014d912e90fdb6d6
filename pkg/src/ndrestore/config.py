"""Run configuration: documented defaults, strict parsing, provenance echo."""

from __future__ import annotations

import copy
import json

from .degrade import KINDS

# Every field a run config may contain, with its default. Unknown keys are
# rejected so typos cannot silently fall back to defaults.
DEFAULTS = {
    "seed": 0,
    "out_dir": "runs/default",
    "dataset": {
        "n": 300,
        "size": 32,
        "mixture": {"noise": 1.0, "rain": 1.0, "haze": 1.0},
        "seed": None,          # falls back to the top-level seed
        "format": "png",
        "dir": None,           # where cmd_synth writes / cmd_train reads
    },
    "train": {
        "lambda": 1.0,
        "lr": 1e-4,
        "batch_size": 4,
        "crop_size": 32,
        "steps": 2000,
        "weight_decay": 1e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "dict_m": 32,
        "dict_n": 8,
        "rank_k": 4,
        "scales": 2,
        "channels": 16,
        "eval_every": 200,
        "ckpt_every": 500,
        "holdout_per_kind": 16,
        "alt_steps": False,
        "detach_u": False,
        "variant": "full",
        "dtype": "float32",
    },
}


class ConfigError(ValueError):
    pass


def _merge(defaults, user, path):
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(defaults[key], dict) and key != "mixture":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {here!r} must be an object")
            out[key] = _merge(defaults[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(user_config):
    """Merge a user config over the defaults, validating every key."""
    if not isinstance(user_config, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = _merge(DEFAULTS, user_config, "")
    if cfg["dataset"]["seed"] is None:
        cfg["dataset"]["seed"] = cfg["seed"]
    for kind in cfg["dataset"]["mixture"]:
        if kind not in KINDS:
            raise ConfigError(f"unknown degradation kind in dataset.mixture: {kind!r}")
    t = cfg["train"]
    for key in ("lr", "batch_size", "crop_size", "dict_m", "dict_n", "rank_k",
                "scales", "channels"):
        if t[key] <= 0:
            raise ConfigError(f"train.{key} must be positive, got {t[key]}")
    if t["lambda"] < 0:
        raise ConfigError(f"train.lambda must be >= 0, got {t['lambda']}")
    if t["steps"] < 0:
        raise ConfigError(f"train.steps must be >= 0, got {t['steps']}")
    if t["dtype"] not in ("float32", "float64"):
        raise ConfigError(f"train.dtype must be float32 or float64, got {t['dtype']!r}")
    return cfg


def load_config(path):
    """Read and resolve a JSON config file.

    Parse errors are re-raised with the file name and line number.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        user = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return resolve(user)

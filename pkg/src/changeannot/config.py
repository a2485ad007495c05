"""Experiment configuration: INI-style sections with typed defaults.

Every key has a default below; a config file overrides defaults, and
command-line flags override the file. The resolved configuration is a plain
nested dict so it can be embedded verbatim in every written artifact.
"""

from __future__ import annotations

import configparser
import copy
import json
from pathlib import Path
from typing import Any

from .errors import ConfigError

DEFAULTS: dict[str, dict[str, Any]] = {
    "experiment": {
        "name": "default",
        "output_dir": "out",
    },
    "paths": {
        # comma-separated, aligned lists: one entry per scene
        "scene_id": [],
        "scene_t1": [],
        "scene_t2": [],
        "scene_mask": [],
        "corpus": "",
        "table": "",
    },
    "imagery": {
        "tile_size": 256,
        "train_fraction": 0.75,
        "seed": 0,
        "bands": [0, 1, 2],
        "normalize": True,
        "t1_date": "t1",
        "t2_date": "t2",
    },
    "cdnet": {
        "encoder": "residual-34",
        "epochs": 200,
        "learning_rate": 0.001,
        "batch_size": 8,
        "seed": 0,
        "attention": True,
        "threshold": 0.5,
    },
    "embeddings": {
        "dim": 300,
        "window": 5,
        "negatives": 5,
        "min_count": 5,
        "min_n": 3,
        "max_n": 6,
        "epochs": 5,
        "learning_rate": 0.01,
        "seed": 0,
    },
    "keywords": {
        "k": 25,
        "min_df": 3,
    },
    "vse": {
        "encoder": "residual-34",
        "epochs": 40,
        "learning_rate": 0.001,
        "batch_size": 8,
        "seed": 0,
        "dropout": 0.5,
        "hidden": 512,
        "min_positive_fraction": 0.0,
        "positive_label": "deforestation",
        "negative_label": "forest",
        "warm_start": "",
    },
    "retrieval": {
        "top_n": 5,
        "ks": [1, 5, 10],
        "model_name": "",
    },
}


def _coerce(value: str, default: Any, key: str) -> Any:
    value = value.strip()
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if default and isinstance(default[0], int):
                return [int(v) for v in items]
            return items
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def set_value(cfg: dict, dotted: str, value: Any) -> None:
    """Set ``section.key``; string values are coerced to the default's type."""
    if "." not in dotted:
        raise ConfigError(f"config key must be 'section.key', got {dotted!r}")
    section, key = dotted.split(".", 1)
    if section not in DEFAULTS or key not in DEFAULTS[section]:
        raise ConfigError(f"unknown config key {dotted!r}")
    if isinstance(value, str):
        value = _coerce(value, DEFAULTS[section][key], dotted)
    cfg[section][key] = value


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = default_config()
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                set_value(cfg, f"{section}.{key}", value)
    for dotted, value in (overrides or {}).items():
        set_value(cfg, dotted, value)
    return cfg


def write_config(cfg: dict, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for section, values in cfg.items():
        parser[section] = {
            k: ", ".join(str(x) for x in v) if isinstance(v, list) else str(v).lower()
            if isinstance(v, bool) else str(v)
            for k, v in values.items()
        }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def config_header(cfg: dict, **extra) -> list[str]:
    """Comment lines recording the resolved config (and any extra facts) for artifacts."""
    lines = [f"config: {json.dumps(cfg, sort_keys=True)}"]
    lines += [f"{k}: {v}" for k, v in sorted(extra.items())]
    return lines


def experiment_dir(cfg: dict) -> Path:
    return Path(cfg["experiment"]["output_dir"]) / cfg["experiment"]["name"]


def require_paths(*paths) -> None:
    missing = [str(p) if p else "<unset>" for p in paths if not p or not Path(p).exists()]
    if missing:
        raise ConfigError(f"missing input path(s): {', '.join(missing)}")

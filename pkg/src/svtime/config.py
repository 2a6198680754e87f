"""Flat JSON configuration files for the ``train`` and ``bench`` commands."""
import json
import os
from dataclasses import fields

from .errors import ConfigError
from .training import TrainConfig

MODEL_KEYS = {"variant", "T", "H", "period", "frequency", "K", "num_blocks", "ablation",
              "svtimet_backcast"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
DATA_KEYS = {"dataset", "split", "split_ratios", "points_per_hour"}
OUTPUT_KEYS = {"checkpoint", "log", "threads"}
SUITE_KEYS = {"data_dir", "datasets", "horizons", "seeds", "ablations", "out"}

TRAIN_FILE_KEYS = MODEL_KEYS | TRAIN_KEYS | DATA_KEYS | OUTPUT_KEYS
SUITE_FILE_KEYS = (MODEL_KEYS | TRAIN_KEYS | SUITE_KEYS | {"threads"}) - {"H", "period", "frequency"}


def read_json(path, allowed):
    """Parse a flat JSON object, rejecting unknown keys.

    Relative paths inside the file are kept as written; callers resolve them
    against the config file's directory with :func:`resolve_path`.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        lines = text.splitlines()
        where = []
        for key in unknown:
            n = next((i for i, l in enumerate(lines, 1) if f'"{key}"' in l), None)
            where.append(f"{key!r}" + (f" (line {n})" if n else ""))
        raise ConfigError(f"{path}: unknown config keys: {', '.join(where)}")
    return cfg


def resolve_path(base_file, p):
    if p is None or os.path.isabs(p):
        return p
    return os.path.join(os.path.dirname(os.path.abspath(base_file)), p)


def train_config_from(cfg, **overrides):
    kw = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

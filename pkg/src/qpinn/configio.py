"""Experiment files: schema-checked JSON mirroring the runtime configs.

Layout:

    {
      "schema_version": 1,
      "case": "vacuum",
      "model": { ... ModelConfig fields ... },
      "train": { ... TrainConfig fields (minus case/model) ... },
      "fdtd":  { ... FdtdConfig fields (minus case) ... }
    }

Unknown keys are rejected everywhere. ``--set`` overrides use dotted paths
(``model.ansatz=cross_mesh``); bare keys are resolved against the top level
first, then train, model, fdtd in that order.
"""
from __future__ import annotations

import dataclasses
import json
import os
from typing import Optional

from .errors import ConfigError
from .fdtd import FdtdConfig
from .network import ModelConfig
from .training import TrainConfig

SCHEMA_VERSION = 1

_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)} - {"t_domain"}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"case", "model"}
_FDTD_KEYS = {f.name for f in dataclasses.fields(FdtdConfig)} - {"case"}
_TOP_KEYS = {"schema_version", "case", "model", "train", "fdtd"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def validate_experiment(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("experiment file must hold a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, "
                          f"got {cfg.get('schema_version')!r}")
    _check_keys(cfg, _TOP_KEYS, "experiment")
    _check_keys(cfg.get("model", {}), _MODEL_KEYS, "model")
    _check_keys(cfg.get("train", {}), _TRAIN_KEYS, "train")
    _check_keys(cfg.get("fdtd", {}), _FDTD_KEYS, "fdtd")
    return cfg


def load_experiment(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            cfg = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return validate_experiment(cfg)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, pairs) -> dict:
    """Apply ``key=value`` strings in place; values parse as JSON or string."""
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        value = _parse_value(raw)
        parts = key.split(".")
        if len(parts) == 1:
            target = _resolve_bare(cfg, parts[0])
            target[parts[0]] = value
        else:
            node = cfg
            for p in parts[:-1]:
                node = node.setdefault(p, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"cannot descend into {key!r}")
            node[parts[-1]] = value
    return validate_experiment(cfg)


def _resolve_bare(cfg: dict, key: str) -> dict:
    if key in _TOP_KEYS:
        return cfg
    for section, allowed in (("train", _TRAIN_KEYS), ("model", _MODEL_KEYS),
                             ("fdtd", _FDTD_KEYS)):
        if key in allowed:
            return cfg.setdefault(section, {})
    raise ConfigError(f"unknown config key {key!r}")


def to_train_config(cfg: dict) -> TrainConfig:
    case = cfg.get("case", "vacuum")
    model = ModelConfig(**cfg.get("model", {}))
    return TrainConfig(case=case, model=model, **cfg.get("train", {}))


def to_fdtd_config(cfg: dict) -> FdtdConfig:
    case = cfg.get("case", "vacuum")
    return FdtdConfig(case=case, **cfg.get("fdtd", {}))


def experiment_dict(cfg: dict) -> dict:
    """Resolved copy (defaults filled in) for provenance dumps."""
    train = to_train_config(cfg)
    fdtd = to_fdtd_config(cfg)
    model = dataclasses.asdict(train.model)
    model.pop("t_domain", None)
    train_d = dataclasses.asdict(train)
    train_d.pop("case"), train_d.pop("model")
    fdtd_d = dataclasses.asdict(fdtd)
    fdtd_d.pop("case")
    return {"schema_version": SCHEMA_VERSION, "case": train.case,
            "model": model, "train": train_d, "fdtd": fdtd_d}

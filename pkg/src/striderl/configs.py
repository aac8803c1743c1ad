"""YAML configuration files with schema ids.

Four sections — model, env, rewards, train — each a mapping whose `schema`
field pins the format version. A bundle file groups any subset under one
`striderl/bundle@1` document. Loaders merge user values over the built-in
defaults and reject unknown keys, so typos fail fast instead of silently
training with defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import yaml

from .model import MODEL_SCHEMA_ID, default_biped_params

__all__ = [
    "ConfigError",
    "load_yaml",
    "load_bundle",
    "section_defaults",
    "merge_section",
    "config_hash",
    "write_default_bundle",
]

BUNDLE_SCHEMA_ID = "striderl/bundle@1"
ENV_SCHEMA_ID = "striderl/env@1"
REWARDS_SCHEMA_ID = "striderl/rewards@1"
TRAIN_SCHEMA_ID = "striderl/train@1"

_SECTION_SCHEMAS = {
    "model": MODEL_SCHEMA_ID,
    "env": ENV_SCHEMA_ID,
    "rewards": REWARDS_SCHEMA_ID,
    "train": TRAIN_SCHEMA_ID,
}


class ConfigError(ValueError):
    """Configuration file failed validation."""


def _env_defaults() -> dict:
    from .env import CommandRanges, EnvConfig

    cfg = EnvConfig(commands=CommandRanges())
    out = dataclasses.asdict(cfg)
    out["schema"] = ENV_SCHEMA_ID
    return out


def _rewards_defaults() -> dict:
    from .rewards import RewardWeights

    out = dataclasses.asdict(RewardWeights())
    out["schema"] = REWARDS_SCHEMA_ID
    return out


def _train_defaults() -> dict:
    from .ppo import PpoConfig

    out = dataclasses.asdict(PpoConfig())
    out["schema"] = TRAIN_SCHEMA_ID
    return out


def section_defaults(kind: str) -> dict:
    if kind == "model":
        return default_biped_params()
    if kind == "env":
        return _env_defaults()
    if kind == "rewards":
        return _rewards_defaults()
    if kind == "train":
        return _train_defaults()
    raise ConfigError(f"unknown config section {kind!r}")


def load_yaml(path: str | Path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def merge_section(kind: str, user: dict | None) -> dict:
    """Defaults overlaid with user values; unknown keys are an error."""
    base = section_defaults(kind)
    if user is None:
        return base
    user = dict(user)
    schema = user.pop("schema", _SECTION_SCHEMAS[kind])
    if schema != _SECTION_SCHEMAS[kind]:
        raise ConfigError(
            f"{kind} config: schema {schema!r} not supported (expected {_SECTION_SCHEMAS[kind]!r})"
        )
    _merge_checked(base, user, kind)
    base["schema"] = schema
    return base


def _merge_checked(dst: dict, src: dict, path: str) -> None:
    for key, value in src.items():
        if key not in dst:
            raise ConfigError(f"unknown config key {path}.{key}")
        if isinstance(value, dict) and isinstance(dst[key], dict):
            _merge_checked(dst[key], value, f"{path}.{key}")
        else:
            dst[key] = value


def load_bundle(path: str | Path | None) -> dict:
    """Resolve a config file into the four merged sections.

    Accepts a bundle document or a single-section document (detected by its
    schema field). Missing sections come out as pure defaults.
    """
    sections: dict[str, dict | None] = {k: None for k in _SECTION_SCHEMAS}
    if path is not None:
        data = load_yaml(path)
        schema = data.get("schema")
        if schema == BUNDLE_SCHEMA_ID:
            for kind in _SECTION_SCHEMAS:
                if kind in data and data[kind] is not None:
                    sections[kind] = data[kind]
            unknown = set(data) - set(_SECTION_SCHEMAS) - {"schema"}
            if unknown:
                raise ConfigError(f"unknown bundle keys: {sorted(unknown)}")
        else:
            for kind, sid in _SECTION_SCHEMAS.items():
                if schema == sid:
                    sections[kind] = data
                    break
            else:
                raise ConfigError(f"{path}: unrecognized schema {schema!r}")
    return {kind: merge_section(kind, user) for kind, user in sections.items()}


def config_hash(sections: dict) -> str:
    """Stable hash of the fully merged config, recorded in checkpoints."""
    canon = json.dumps(sections, sort_keys=True, default=float)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_default_bundle(path: str | Path) -> None:
    bundle = {"schema": BUNDLE_SCHEMA_ID}
    for kind in _SECTION_SCHEMAS:
        bundle[kind] = section_defaults(kind)
    with open(path, "w") as fh:
        yaml.safe_dump(bundle, fh, sort_keys=False)

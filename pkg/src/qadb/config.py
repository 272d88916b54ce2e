"""Engine configuration with flags > environment > config file > defaults.

Config file: a flat `key = value` text file ('#' comments allowed).
Documented keys: store, index, encoder, scorer, dim, k, layout,
threshold, seed. Environment variables: QA_STORE, QA_INDEX,
QA_ENCODER_URL, QA_SCORER_URL, QA_DIM, QA_SEED (URLs imply the remote
backend).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_STORE = "qa_store"
DEFAULT_INDEX = "qa_index.qaix"


@dataclass
class EngineConfig:
    store_path: str = DEFAULT_STORE
    index_path: str = DEFAULT_INDEX
    encoder: str = "ref"
    scorer: str = "ref"
    dim: int = 768
    k: int = 500
    layout: str = "QAQ"
    threshold: float | None = None
    seed: int | None = None


_FILE_KEYS = {"store", "index", "encoder", "scorer", "dim", "k", "layout", "threshold", "seed"}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _FILE_KEYS:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = value.strip()
    return values


def load_config(config_path: str | None = None, overrides: dict | None = None) -> EngineConfig:
    """Merge defaults, config file, QA_* environment, and explicit overrides."""
    merged: dict[str, object] = {}

    if config_path:
        merged.update(parse_config_file(config_path))

    env = os.environ
    if env.get("QA_STORE"):
        merged["store"] = env["QA_STORE"]
    if env.get("QA_INDEX"):
        merged["index"] = env["QA_INDEX"]
    if env.get("QA_ENCODER_URL"):
        merged["encoder"] = "remote:" + env["QA_ENCODER_URL"]
    if env.get("QA_SCORER_URL"):
        merged["scorer"] = "remote:" + env["QA_SCORER_URL"]
    if env.get("QA_DIM"):
        merged["dim"] = env["QA_DIM"]
    if env.get("QA_SEED"):
        merged["seed"] = env["QA_SEED"]

    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    config = EngineConfig()
    if "store" in merged:
        config.store_path = str(merged["store"])
    if "index" in merged:
        config.index_path = str(merged["index"])
    if "encoder" in merged:
        config.encoder = str(merged["encoder"])
    if "scorer" in merged:
        config.scorer = str(merged["scorer"])
    try:
        if "dim" in merged:
            config.dim = int(merged["dim"])
        if "k" in merged:
            config.k = int(merged["k"])
        if "seed" in merged and merged["seed"] not in ("", None):
            config.seed = int(merged["seed"])
        if "threshold" in merged and merged["threshold"] not in ("", None):
            config.threshold = float(merged["threshold"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid numeric config value: {exc}") from exc
    if "layout" in merged:
        config.layout = str(merged["layout"]).upper()
    if config.dim < 8:
        raise ConfigError(f"dim must be >= 8, got {config.dim}")
    if config.k < 1:
        raise ConfigError(f"k must be >= 1, got {config.k}")
    return config

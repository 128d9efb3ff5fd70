"""Run configuration: one JSON document drives every pipeline stage.

``default_config()`` carries every tunable constant of the framework;
``cli init`` writes it out so a run's config file is the single source of
truth. Stage outputs embed the SHA-256 hash of the canonical config JSON,
which is how reruns detect that nothing changed.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .blocks import BAND_EDGES, DEFAULT_PLAUSIBILITY
from .records import ALL_CHANNELS
from .schema import CATEGORIES, SCALES, SUMMARIES


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


def default_config() -> dict:
    return {
        "seed": 2024,
        "cohort": {
            "kind": "synth",
            "n_segments": 40,
            "duration_hours": 16.0,
            "event_fraction": 0.25,
            "precursor_leads": [480, 420, 360],
            "onset_range": [640, 880],
            "heart_rate": 75.0,
            "channels": list(ALL_CHANNELS),
            "path": None,
        },
        "filter": {"min_hours": 24.0, "max_missing_ratio": 0.25, "enabled": False},
        "extract": {
            "channels": list(ALL_CHANNELS),
            "categories": list(CATEGORIES),
            "summaries": list(SUMMARIES),
            "max_scale": 480,
            "scales": list(SCALES),
            "band_edges": [list(b) for b in BAND_EDGES],
            "plausibility": {k: list(v) for k, v in DEFAULT_PLAUSIBILITY.items()},
            "write_csv": False,
        },
        "label": {"threshold": 20.0, "run": 5, "horizon": 480},
        "split": {
            "n_splits": 10,
            "ratios": [0.4, 0.2, 0.4],
            "tolerance": 0.015,
            "budget": 100000,
        },
        "train": {
            "stage1": {"lam": 1e-4, "epochs": 5, "lr": 0.1},
            "grid": {
                "lam": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
                "epochs": [5, 20],
                "lr": [0.1, 0.01],
            },
            "batch_size": 128,
            "top_k": 100,
            "baselines": ["bl1", "bl2"],
        },
        "evaluate": {"n_boot": 100, "boot_frac": 0.5, "target_precision": 0.35},
        "workers": 1,
    }


_REQUIRED_SECTIONS = (
    "seed", "cohort", "filter", "extract", "label", "split", "train", "evaluate",
)


def validate_config(cfg: dict) -> dict:
    """Structural validation; returns the config with defaults filled in."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    merged = copy.deepcopy(default_config())
    for key, value in cfg.items():
        if key not in merged and key != "workers":
            raise ConfigError(f"unknown config section: {key!r}")
        if isinstance(value, dict):
            for sub, sub_value in value.items():
                if sub not in merged[key]:
                    raise ConfigError(f"unknown config key: {key}.{sub}")
                merged[key][sub] = copy.deepcopy(sub_value)
        else:
            merged[key] = copy.deepcopy(value)
    for section in _REQUIRED_SECTIONS:
        if section not in merged:
            raise ConfigError(f"missing config section {section!r}")
    cohort = merged["cohort"]
    if cohort["kind"] not in ("synth", "disk"):
        raise ConfigError("cohort.kind must be 'synth' or 'disk'")
    if cohort["kind"] == "disk" and not cohort.get("path"):
        raise ConfigError("cohort.kind 'disk' requires cohort.path")
    ratios = merged["split"]["ratios"]
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split.ratios must be three numbers summing to 1")
    if merged["extract"]["max_scale"] < min(SCALES):
        raise ConfigError("extract.max_scale below the smallest scale")
    return merged


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


def write_config(cfg: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return path

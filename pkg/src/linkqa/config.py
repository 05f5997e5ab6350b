"""Run configuration: TOML loading, presets, and dataclass assembly.

Precedence, lowest to highest: dataclass defaults, ``--preset``, config
file sections, explicit command-line flags.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .benchmark import GenConfig
from .embedding import TrainConfig
from .qa import QaConfig

# shrinks the pipeline so a full variant comparison finishes in minutes
# on a desktop CPU
DESK_PRESET: dict[str, dict] = {
    "kbe": {"h": 32, "n_kbe": 200, "k_kbe": 100, "mrr_every": 5},
    "qa": {"n_qa": 100, "k_qa": 50, "lr_qa": 2e-3, "eval_every": 5},
    "gen": {},
}

PRESETS = {"desk": DESK_PRESET}

SECTION_CLASSES = {"kbe": TrainConfig, "qa": QaConfig, "gen": GenConfig}


def load_config_file(path: str | Path) -> dict:
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    for section in raw:
        if section not in SECTION_CLASSES and section != "eval":
            raise ValueError(f"unknown config section [{section}]")
    return raw


def build_section(section: str, *layers: Optional[dict]):
    """Merge override layers (later wins) onto the section's defaults."""
    cls = SECTION_CLASSES[section]
    valid = {f.name for f in dataclasses.fields(cls)}
    merged: dict = {}
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if key not in valid:
                raise ValueError(f"unknown {section} option {key!r}")
            merged[key] = value
    return cls(**merged)


def assemble(
    preset: Optional[str] = None,
    config_path: Optional[str | Path] = None,
    flag_overrides: Optional[dict[str, dict]] = None,
) -> dict:
    """Build the kbe/qa/gen config objects plus the raw [eval] section."""
    if preset and preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    preset_layers = PRESETS[preset] if preset else {}
    file_layers = load_config_file(config_path) if config_path else {}
    flag_overrides = flag_overrides or {}
    out = {}
    for section in SECTION_CLASSES:
        out[section] = build_section(
            section,
            preset_layers.get(section),
            file_layers.get(section),
            flag_overrides.get(section),
        )
    out["eval"] = file_layers.get("eval", {})
    return out

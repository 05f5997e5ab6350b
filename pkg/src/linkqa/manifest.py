"""Run manifests: config echoes, seeds, and content hashes of inputs.

Manifests contain no timestamps, so re-running a command on identical
inputs reproduces every artifact byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def input_hashes(paths: dict[str, str | Path]) -> dict[str, str]:
    return {name: sha256_file(p) for name, p in sorted(paths.items())}


def write_manifest(dir_path: str | Path, payload: dict) -> None:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    with open(dir_path / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(dir_path: str | Path) -> dict:
    with open(Path(dir_path) / "manifest.json", encoding="utf-8") as f:
        return json.load(f)

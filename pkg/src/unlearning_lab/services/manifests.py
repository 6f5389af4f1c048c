"""Deterministic stage manifests chaining the hashes of their inputs."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from unlearning_lab.exceptions import MissingArtifactError

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "manifest.json"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {what}: {path}")
    return path


def hash_files(paths: Mapping[str, Path], root: Path) -> dict[str, str]:
    """SHA-256 per artifact, keyed by its path relative to ``root``."""
    hashes = {}
    for what, path in paths.items():
        require(path, what)
        try:
            key = path.resolve().relative_to(root.resolve()).as_posix()
        except ValueError:
            key = path.name
        hashes[key] = file_sha256(path)
    return dict(sorted(hashes.items()))


def write_manifest(
    directory: Path,
    stage: str,
    *,
    root: Path,
    config: Mapping[str, Any],
    inputs: Mapping[str, Path] | None = None,
    outputs: Mapping[str, Path] | None = None,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """Write ``manifest.json`` with sorted keys and no timestamps."""
    payload = {
        "stage": stage,
        "config": config,
        "inputs": hash_files(inputs or {}, root),
        "outputs": hash_files(outputs or {}, root),
        **(extra or {}),
    }
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_FILENAME
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("wrote %s manifest to %s", stage, path)
    return path


def read_manifest(directory: Path) -> dict[str, Any]:
    path = require(directory / MANIFEST_FILENAME, "stage manifest")
    return json.loads(path.read_text(encoding="utf-8"))

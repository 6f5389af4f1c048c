from __future__ import annotations

import tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from unlearning_lab.exceptions import ConfigurationError, MissingArtifactError
from unlearning_lab.schemas import ExperimentConfig

# flag name -> (section, field)
FLAG_TARGETS: dict[str, tuple[str, str]] = {
    "out": ("experiment", "output_dir"),
    "method": ("unlearn", "method"),
    "lr": ("unlearn", "learning_rate"),
    "lambda_": ("unlearn", "lambda"),
    "beta": ("unlearn", "beta"),
    "k": ("unlearn", "k"),
    "corruption": ("unlearn", "corruption_rate"),
}
SEEDED_SECTIONS = ("world", "selection", "model", "pretrain", "unlearn")


def read_config_file(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    if not path.exists():
        raise MissingArtifactError(f"config file does not exist: {path}")
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def merge_overrides(raw: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Apply command-line flags over file values; ``None`` means the flag was not given."""
    merged: dict[str, Any] = {section: dict(values) for section, values in raw.items()}
    for flag, value in overrides.items():
        if value is None:
            continue
        if flag == "seed":
            for section in SEEDED_SECTIONS:
                merged.setdefault(section, {})["seed"] = value
            merged.setdefault("experiment", {})["seeds"] = [value]
            continue
        if flag not in FLAG_TARGETS:
            raise ConfigurationError(f"unknown override {flag!r}")
        section, field = FLAG_TARGETS[flag]
        merged.setdefault(section, {})[field] = str(value) if flag == "out" else value
    return merged


def load_config(path: Path | None = None, **overrides: Any) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(merge_overrides(read_config_file(path), overrides))
    except ValidationError as exc:
        raise ConfigurationError(f"invalid experiment configuration: {exc}") from exc


def config_record(config: ExperimentConfig) -> dict[str, Any]:
    """JSON-ready configuration echoed into every manifest."""
    return config.model_dump(
        mode="json", by_alias=True, exclude={"experiment": {"output_dir"}}
    )

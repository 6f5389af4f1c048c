from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from unlearning_lab.exceptions import MissingArtifactError
from unlearning_lab.services.manifests import (
    MANIFEST_FILENAME,
    hash_files,
    read_manifest,
    require,
    write_manifest,
)


def test_require_names_the_missing_artifact(tmp_path: Path) -> None:
    with pytest.raises(MissingArtifactError, match="missing base checkpoint"):
        require(tmp_path / "base.ckpt", "base checkpoint")


def test_hashes_are_keyed_by_relative_path(tmp_path: Path) -> None:
    inside = tmp_path / "world" / "triples.tsv"
    inside.parent.mkdir()
    inside.write_bytes(b"Ana Lovo\tcitizenship\tDorava\n")
    outside = tmp_path.parent / f"{tmp_path.name}-notes.txt"
    outside.write_bytes(b"notes")

    hashes = hash_files({"triples": inside, "notes": outside}, tmp_path / ".")

    assert hashes == {
        "world/triples.tsv": hashlib.sha256(inside.read_bytes()).hexdigest(),
        outside.name: hashlib.sha256(b"notes").hexdigest(),
    }


def test_manifest_is_deterministic(tmp_path: Path) -> None:
    output = tmp_path / "bench" / "dataset.jsonl"
    output.parent.mkdir()
    output.write_text("{}\n", encoding="utf-8")

    def write() -> bytes:
        path = write_manifest(
            tmp_path / "bench",
            "build_bench",
            root=tmp_path,
            config={"seed": 7},
            outputs={"dataset": output},
            extra={"target_count": 1},
        )
        return path.read_bytes()

    first = write()

    assert write() == first
    manifest = read_manifest(tmp_path / "bench")
    assert manifest["stage"] == "build_bench"
    assert manifest["inputs"] == {}
    assert list(manifest["outputs"]) == ["bench/dataset.jsonl"]
    assert manifest["target_count"] == 1


def test_manifest_inputs_must_exist(tmp_path: Path) -> None:
    with pytest.raises(MissingArtifactError):
        write_manifest(
            tmp_path, "unlearn", root=tmp_path, config={}, inputs={"base": tmp_path / "x.ckpt"}
        )
    assert not (tmp_path / MANIFEST_FILENAME).exists()
    with pytest.raises(MissingArtifactError):
        read_manifest(tmp_path)

from __future__ import annotations

import json

import pytest

from unlearning_lab.exceptions import DatasetFormatError, MissingArtifactError
from unlearning_lab.schemas import FiltrationConfig
from unlearning_lab.services.bench.dataset_io import (
    emit_dataset,
    load_dataset,
    load_probes,
    manifest_path_for,
)


def test_emitted_dataset_loads_back_into_the_same_cases(chain_case, tmp_path) -> None:
    path = tmp_path / "bench" / "dataset.jsonl"

    manifest = emit_dataset([chain_case], path, seed=3, filtration=FiltrationConfig())

    assert manifest.target_count == 1
    assert manifest.direct_qa_count == 1
    assert manifest.rejection_counts == {"schema": 1, "node": 1, "path": 1, "accepted": 1}
    assert len(path.read_text().splitlines()) == 16
    assert load_dataset(path) == [chain_case]


def test_probe_records_are_one_json_object_per_line(chain_case, tmp_path) -> None:
    path = tmp_path / "dataset.jsonl"
    emit_dataset([chain_case], path, seed=3, filtration=FiltrationConfig())

    first = json.loads(path.read_text().splitlines()[0])

    assert first["probe_id"] == "case-0000-QA-direct-1"
    assert first["target"] == {"head": "F1", "relation": "director", "tail": "P1"}


def test_missing_dataset_is_a_missing_artifact(tmp_path) -> None:
    with pytest.raises(MissingArtifactError):
        load_probes(tmp_path / "absent.jsonl")


def test_malformed_record_reports_its_index(chain_case, tmp_path) -> None:
    path = tmp_path / "dataset.jsonl"
    emit_dataset([chain_case], path, seed=3, filtration=FiltrationConfig())
    lines = path.read_text().splitlines()
    broken = json.loads(lines[2])
    broken["probe_type"] = "four_hop"
    lines[2] = json.dumps(broken)
    path.write_text("\n".join(lines) + "\n")

    with pytest.raises(DatasetFormatError) as excinfo:
        load_probes(path)
    assert excinfo.value.record_index == 2


def test_probe_of_unknown_case_is_rejected(chain_case, tmp_path) -> None:
    path = tmp_path / "dataset.jsonl"
    emit_dataset([chain_case], path, seed=3, filtration=FiltrationConfig())
    manifest = json.loads(manifest_path_for(path).read_text())
    manifest["cases"][0]["case_id"] = "case-9999"
    manifest_path_for(path).write_text(json.dumps(manifest))

    with pytest.raises(DatasetFormatError, match="unknown case"):
        load_dataset(path)


def test_dataset_cut_at_a_record_boundary_is_rejected(chain_case, tmp_path) -> None:
    path = tmp_path / "dataset.jsonl"
    emit_dataset([chain_case], path, seed=3, filtration=FiltrationConfig())
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")

    assert len(load_probes(path)) == len(lines) - 3
    with pytest.raises(DatasetFormatError, match="truncated") as excinfo:
        load_dataset(path)
    assert excinfo.value.record_index == len(lines) - 3

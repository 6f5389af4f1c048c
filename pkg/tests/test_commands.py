from __future__ import annotations

from io import StringIO
from pathlib import Path

import polars as pl
import pytest
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError

from unlearning_lab.exceptions import TrainingDivergedError
from unlearning_lab.services.evaluation.reports import SweepEntry
from unlearning_lab.services.pipeline import ExperimentPipeline
from unlearning_lab.services.types import EpochLosses, UnlearnRun


def _call(name: str, tmp_path: Path, **options) -> str:
    out = StringIO()
    call_command(name, config=Path(settings.LAB_CONFIG_FILE), out=tmp_path, stdout=out, **options)
    return out.getvalue()


def test_gen_world_writes_the_world(tmp_path: Path) -> None:
    output = _call("gen_world", tmp_path, seed=11)

    assert "Generated world" in output
    assert "(seed 11)" in output
    assert (tmp_path / "world" / "triples.tsv").exists()
    assert (tmp_path / "world" / "manifest.json").exists()


def test_missing_world_exits_with_code_three(tmp_path: Path) -> None:
    with pytest.raises(CommandError) as excinfo:
        _call("build_bench", tmp_path)

    assert excinfo.value.returncode == 3
    assert "world triples" in str(excinfo.value)


def test_invalid_configuration_exits_with_code_one(tmp_path: Path) -> None:
    with pytest.raises(CommandError) as excinfo:
        _call("unlearn", tmp_path, beta=-1.0)

    assert excinfo.value.returncode == 1


def test_divergence_exits_with_code_four(tmp_path: Path, mocker) -> None:
    mocker.patch.object(
        ExperimentPipeline,
        "unlearn",
        side_effect=TrainingDivergedError("NEDS diverged", diagnostics={"epoch": 1, "step": 3}),
    )

    with pytest.raises(CommandError) as excinfo:
        _call("unlearn", tmp_path, method="NEDS")

    assert excinfo.value.returncode == 4


def test_unlearn_reports_the_final_losses(tmp_path: Path, mocker) -> None:
    run = UnlearnRun("NEDS", "abc", [EpochLosses(1, 5, 0.5, 1.25, 0.75, 2.5)], "def", 5)
    unlearn = mocker.patch.object(ExperimentPipeline, "unlearn", autospec=True, return_value=run)

    output = _call("unlearn", tmp_path, method="NEDS", lr=3e-5, lambda_=0.5)

    assert "NEDS: 5 steps, final losses forget 0.5000 anchor 1.2500 retain 0.7500" in output
    config = unlearn.call_args.args[0].config
    assert (config.unlearn.method, config.unlearn.learning_rate) == ("NEDS", 3e-5)
    assert config.unlearn.lambda_ == 0.5
    assert config.experiment.output_dir == tmp_path


def test_sweep_prints_every_rate(tmp_path: Path, mocker) -> None:
    entries = [
        SweepEntry(1e-4, 0.9, 0.6, 0.72),
        SweepEntry(3e-5, float("nan"), float("nan"), float("nan"), "failed: diverged"),
    ]
    mocker.patch.object(ExperimentPipeline, "sweep", return_value=(entries, entries[0]))

    output = _call("sweep", tmp_path, method="NPO")

    assert "lr 0.0001: direct UE 0.900, locality 0.600, Hmean 0.720" in output
    assert "lr 3e-05: failed: diverged" in output
    assert "Selected learning rate 0.0001" in output


def test_compare_seeds_passes_the_seed_list(tmp_path: Path, mocker) -> None:
    frame = pl.DataFrame(
        [
            {"seed": 1, "method": "NEDS", "DirectUE": 0.95, "MultiHopUE": 0.9, "Hmean": 0.88},
            {"seed": 2, "method": "NEDS", "DirectUE": 0.9, "MultiHopUE": 0.85, "Hmean": 0.8},
        ]
    )
    compare = mocker.patch.object(ExperimentPipeline, "compare_seeds", return_value=frame)

    output = _call("compare_seeds", tmp_path, method="NEDS", seeds=[1, 2])

    compare.assert_called_once_with(["NEDS"], [1, 2])
    assert "seed 2 NEDS: direct UE 0.900, multi-hop UE 0.850, Hmean 0.800" in output
    assert "majority.json" in output

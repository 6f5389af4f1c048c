from __future__ import annotations

import math
from pathlib import Path

import polars as pl
import pytest
from django.conf import settings

from unlearning_lab.exceptions import MissingArtifactError, NumericError, TrainingDivergedError
from unlearning_lab.schemas import ExperimentConfig
from unlearning_lab.services.bench.dataset_io import write_probes
from unlearning_lab.services.config_file import load_config
from unlearning_lab.services.evaluation.reports import read_json
from unlearning_lab.services.kg.triples_io import dump_world
from unlearning_lab.services.lm.checkpoint import save_checkpoint
from unlearning_lab.services.lm.corpus import build_corpus, build_tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.manifests import file_sha256, read_manifest
from unlearning_lab.services.pipeline import ExperimentPipeline, known_cases
from unlearning_lab.services.types import MetricsReport


def _pipeline(root: Path, graph) -> ExperimentPipeline:
    config = ExperimentConfig.model_validate(
        {
            "selection": {"n_targets": 1, "seed": 3},
            "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_seq_len": 64},
            "adapters": {"rank": 2, "alpha": 4.0, "dropout": 0.0},
            "pretrain": {"epochs": 2, "batch_size": 16, "warmup_steps": 0, "eval_interval": 1},
            "unlearn": {"method": "NPO", "epochs": 2, "learning_rate": 1e-2, "k": 4},
            "sweep": {"learning_rates": [1e-2, 1e-3], "corruption_rates": [0.0, 0.5]},
            "experiment": {
                "output_dir": str(root),
                "methods": ["NPO", "ICU"],
                "max_answer_tokens": 4,
            },
        }
    )
    dump_world(graph, root / "world")
    return ExperimentPipeline(config)


@pytest.fixture
def pipeline(tmp_path: Path, chain_graph) -> ExperimentPipeline:
    return _pipeline(tmp_path, chain_graph)


def _install_base_model(pipeline: ExperimentPipeline) -> None:
    """An untrained base model that 'knows' every probe, in place of the pretrain stage."""
    graph, cases = pipeline.graph(), pipeline.cases()
    tokenizer = build_tokenizer(graph, build_corpus(graph, pipeline.bank, cases), cases)
    pipeline.model_dir.mkdir(parents=True)
    tokenizer.save(pipeline.tokenizer_path)
    model_config = pipeline.config.model.model_copy(update={"vocab_size": len(tokenizer)})
    save_checkpoint(TransformerLM(model_config), pipeline.base_checkpoint)
    write_probes([p for case in cases for p in case.probes], pipeline.known_path)


def _pooled(method: str) -> MetricsReport:
    ue = {"direct": 0.8, "paraphrase": 0.5, "inverse": 0.5, "multi_hop": 0.4}
    return MetricsReport(method, "All", ue, 0.6, 0.9, 0.3, -0.6, 0.2, 0.685714)


def test_known_cases_need_both_direct_questions(chain_case) -> None:
    without_qa = [p for p in chain_case.probes if p.probe_id != "case-0000-QA-direct-1"]
    without_fb = [p for p in chain_case.probes if p.probe_id != "case-0000-FB-direct-1"]
    without_inverse = [p for p in chain_case.probes if p.probe_id != "case-0000-QA-inverse-1"]

    assert known_cases([chain_case], without_qa) == []
    assert known_cases([chain_case], without_fb) == []
    [kept] = known_cases([chain_case], without_inverse)
    assert len(kept.probes) == len(chain_case.probes) - 1


def test_gen_world_is_reproducible(tmp_path: Path) -> None:
    config = load_config(Path(settings.LAB_CONFIG_FILE), out=tmp_path / "a")
    first = ExperimentPipeline(config).gen_world()
    again = ExperimentPipeline(load_config(Path(settings.LAB_CONFIG_FILE), out=tmp_path / "b"))
    again.gen_world()

    manifest = read_manifest(tmp_path / "a" / "world")
    assert manifest["entity_count"] == len(first.entities)
    assert manifest["seed"] == 7
    assert manifest == read_manifest(tmp_path / "b" / "world")


def test_build_bench_records_the_dataset(pipeline: ExperimentPipeline) -> None:
    cases = pipeline.build_bench()

    manifest = read_manifest(pipeline.bench_dir)
    assert len(cases) == 1
    assert manifest["target_count"] == 1
    assert manifest["direct_qa_count"] == 1
    assert "world/triples.tsv" in manifest["inputs"]
    assert pipeline.cases() == cases


def test_stages_report_missing_inputs(pipeline: ExperimentPipeline) -> None:
    with pytest.raises(MissingArtifactError, match="benchmark dataset"):
        pipeline.pretrain()
    with pytest.raises(MissingArtifactError, match="base checkpoint"):
        pipeline.unlearn("NPO")
    with pytest.raises(MissingArtifactError, match="run eval first"):
        pipeline.report()


def test_pretrain_stage_writes_model_and_known_probes(pipeline: ExperimentPipeline) -> None:
    pipeline.build_bench()

    result = pipeline.pretrain()

    manifest = read_manifest(pipeline.model_dir)
    assert result.epochs_run <= 2
    assert manifest["checkpoint_sha256"] == file_sha256(pipeline.base_checkpoint)
    assert manifest["known_probe_count"] + manifest["dropped_probe_count"] == 16
    assert pipeline.tokenizer_path.exists()
    assert pipeline.known_path.exists()


def test_unlearn_evaluate_and_report(pipeline: ExperimentPipeline) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)

    run = pipeline.unlearn()
    icu = pipeline.unlearn("ICU")
    before = pipeline.evaluate()
    after = pipeline.evaluate("NPO")
    pipeline.evaluate("ICU")
    frame = pipeline.report()

    run_manifest = read_manifest(pipeline.run_dir("NPO"))
    assert run.steps == 2
    assert run_manifest["reference_checkpoint"] == file_sha256(pipeline.base_checkpoint)
    assert run_manifest["final_checkpoint"] == file_sha256(pipeline.run_dir("NPO") / "model.ckpt")
    assert pl.read_csv(pipeline.run_dir("NPO") / "losses.csv").height == 2
    assert icu.steps == 0
    assert not (pipeline.run_dir("ICU") / "model.ckpt").exists()

    assert [r.template_family for r in before] == ["QA", "FB", "All"]
    assert before[-1].method == "BE (before)"
    assert before[-1].delta_kcs == 0.0
    assert after[-1].kcs_pre == before[-1].kcs_post
    boundary = read_json(pipeline.report_dir(None) / "boundary.json")
    assert boundary["mean_kl_forget"] == 0.0
    assert boundary["neighbor_within_epsilon_fraction"] == 1.0

    assert frame.height == 9
    assert frame["method"].unique(maintain_order=True).to_list() == ["BE (before)", "NPO", "ICU"]
    summary = read_json(pipeline.root / "reports" / "summary.json")
    assert set(summary["diagnostics"]) == {"before", "NPO", "ICU"}
    assert (pipeline.root / "reports" / "delta_kcs.svg").exists()


def test_divergence_keeps_the_last_good_model(pipeline: ExperimentPipeline, mocker) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)
    mocker.patch(
        "unlearning_lab.services.pipeline.run_unlearn",
        side_effect=TrainingDivergedError("NPO diverged", diagnostics={"epoch": 2}),
    )

    with pytest.raises(TrainingDivergedError):
        pipeline.unlearn()

    assert (pipeline.run_dir("NPO") / "last_good.ckpt").exists()


def test_sweep_keeps_failed_rates_in_the_grid(pipeline: ExperimentPipeline, mocker) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)
    mocker.patch.object(
        ExperimentPipeline,
        "_train_and_score",
        side_effect=[_pooled("NPO"), NumericError("unlearning loss is not finite")],
    )

    entries, best = pipeline.sweep()

    assert best.learning_rate == 1e-2
    assert entries[1].status.startswith("failed")
    assert math.isnan(entries[1].hmean)
    grid = pl.read_csv(pipeline.sweep_dir("NPO") / "grid.csv")
    assert grid["learning_rate"].to_list() == [1e-2, 1e-3]
    assert read_json(pipeline.sweep_dir("NPO") / "best.json")["learning_rate"] == 1e-2


def test_corruption_ablation_table(pipeline: ExperimentPipeline, mocker) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)
    train = mocker.patch.object(
        ExperimentPipeline, "_train_and_score", return_value=_pooled("NEDS")
    )

    frame = pipeline.ablate_corruption()

    assert frame["corruption_rate"].to_list() == [0.0, 0.5]
    assert frame["MultiHopUE"].to_list() == [0.4, 0.4]
    rates = [call.args[0].corruption_rate for call in train.call_args_list]
    assert rates == [0.0, 0.5]
    assert all(call.args[0].method == "NEDS" for call in train.call_args_list)


def test_rerun_with_the_same_config_writes_identical_csv_bytes(
    tmp_path: Path, chain_graph
) -> None:
    roots = (tmp_path / "first", tmp_path / "second")
    for root in roots:
        pipeline = _pipeline(root, chain_graph)
        pipeline.build_bench()
        _install_base_model(pipeline)
        pipeline.unlearn()
        pipeline.evaluate()
        pipeline.evaluate("NPO")
        pipeline.report()

    for relative in (
        "bench/dataset.jsonl",
        "runs/NPO/losses.csv",
        "reports/before/metrics.csv",
        "reports/NPO/metrics.csv",
        "reports/summary.csv",
    ):
        first, second = (root / relative for root in roots)
        assert first.read_bytes() == second.read_bytes(), relative


def test_compare_seeds_unlearns_each_method_per_seed(pipeline: ExperimentPipeline) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)

    frame = pipeline.compare_seeds(["NPO", "ICU"], [1, 2])
    pipeline.evaluate()
    pipeline.report()

    assert frame["seed"].to_list() == [1, 1, 2, 2]
    assert frame["method"].to_list() == ["NPO", "ICU", "NPO", "ICU"]
    majority = read_json(pipeline.seeds_dir / "majority.json")
    # the orderings all compare against NEDS
    assert majority["checks"] == {}
    assert read_manifest(pipeline.seeds_dir)["seeds"] == [1, 2]
    summary = read_json(pipeline.root / "reports" / "summary.json")
    assert summary["seed_majority"] == majority


def test_compare_seeds_defaults_to_the_configured_seeds(
    pipeline: ExperimentPipeline, mocker
) -> None:
    pipeline.build_bench()
    _install_base_model(pipeline)
    run = mocker.patch.object(ExperimentPipeline, "_run")

    frame = pipeline.compare_seeds(["ICU"])

    assert frame["seed"].to_list() == pipeline.config.experiment.seeds
    assert [call.args[1].seed for call in run.call_args_list] == pipeline.config.experiment.seeds


def test_default_world_supplies_every_requested_target(tmp_path: Path) -> None:
    config = load_config(Path(settings.LAB_CONFIG_FILE), out=tmp_path)
    pipeline = ExperimentPipeline(config)
    pipeline.gen_world()

    cases = pipeline.build_bench()

    manifest = read_manifest(pipeline.bench_dir)
    assert len(cases) == config.selection.n_targets == 20
    assert manifest["target_count"] == manifest["direct_qa_count"] == 20

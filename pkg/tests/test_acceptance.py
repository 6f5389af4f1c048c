"""End-to-end runs on the default desk-scale configuration.

Deselected by default; run with ``pytest -m acceptance``.
"""

from __future__ import annotations

from pathlib import Path

import networkx as nx
import polars as pl
import pytest
from django.conf import settings

from unlearning_lab.services.bench.benchmark import build_case, has_exact_distribution
from unlearning_lab.services.bench.chains import shuffled_targets
from unlearning_lab.services.bench.filtration import excluded_families
from unlearning_lab.services.bench.templates import default_template_bank
from unlearning_lab.services.config_file import load_config
from unlearning_lab.services.evaluation.reports import read_json
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.kg.world import generate_world
from unlearning_lab.services.pipeline import ExperimentPipeline
from unlearning_lab.services.types import Triple

pytestmark = pytest.mark.acceptance

CONFIG_FILE = Path(settings.LAB_CONFIG_FILE)


def _has_short_path(graph: KnowledgeGraph, target: Triple, fact: Triple, depth: int) -> bool:
    multigraph = nx.MultiGraph()
    multigraph.add_nodes_from(graph.entities)
    for triple in graph.triples:
        if triple not in (target, fact):
            multigraph.add_edge(triple.head, triple.tail)
    if target.tail == fact.tail:
        return True
    paths = nx.all_simple_paths(multigraph, target.tail, fact.tail, cutoff=depth)
    return next(iter(paths), None) is not None


@pytest.mark.parametrize("seed", range(50))
def test_retain_facts_are_separated_from_the_target(seed: int) -> None:
    config = load_config(CONFIG_FILE, seed=seed)
    graph = generate_world(config.world)
    bank = default_template_bank()
    depth = config.filtration.search_depth
    checked = 0

    for index, target in enumerate(shuffled_targets(graph, config.selection, seed, bank)[:20]):
        case = build_case(graph, f"case-{index:04d}", target, bank, config.filtration, seed)
        if case is None:
            continue
        assert case.deficiencies or has_exact_distribution(case)
        families = excluded_families(graph, target, case.chains)
        for fact in case.retain_facts:
            assert graph.relation(fact.relation).family not in families
            assert not any(
                {t.head, t.tail} == {target.tail, fact.tail} for t in graph.triples
            )
            assert not _has_short_path(graph, target, fact, depth)
            checked += 1

    assert checked > 0


def test_neds_forgets_and_keeps_the_retain_set(tmp_path: Path) -> None:
    pipeline = ExperimentPipeline(load_config(CONFIG_FILE, out=tmp_path))
    pipeline.gen_world()
    pipeline.build_bench()
    pipeline.pretrain()
    before = pipeline.evaluate()[-1]
    assert before.ue_by_type["direct"] <= 0.05

    _, best = pipeline.sweep("NEDS")
    tuned = ExperimentPipeline(
        load_config(CONFIG_FILE, out=tmp_path, method="NEDS", lr=best.learning_rate)
    )
    tuned.unlearn()
    after = tuned.evaluate("NEDS")[-1]

    assert after.ue_by_type["direct"] >= 0.90
    assert after.ue_by_type["paraphrase"] >= 0.90
    assert after.ue_by_type["multi_hop"] >= 0.80
    assert after.refusal_rate == 0.0
    assert after.locality >= 0.80 * before.locality


@pytest.fixture(scope="module")
def trained(tmp_path_factory: pytest.TempPathFactory) -> ExperimentPipeline:
    pipeline = ExperimentPipeline(load_config(CONFIG_FILE, out=tmp_path_factory.mktemp("lab")))
    pipeline.gen_world()
    pipeline.build_bench()
    pipeline.pretrain()
    return pipeline


@pytest.fixture(scope="module")
def seed_table(trained: ExperimentPipeline) -> pl.DataFrame:
    assert len(trained.config.experiment.seeds) == 3
    return trained.compare_seeds(["NEDS", "NPO"])


def _majority(pipeline: ExperimentPipeline, check: str) -> bool:
    return read_json(pipeline.seeds_dir / "majority.json")["checks"][check]["majority"]


def test_neds_keeps_multi_hop_forgetting_level_with_npo(trained, seed_table) -> None:
    assert _majority(trained, "neds_multi_hop_vs_npo")


def test_neds_beats_the_best_gradient_ascent_sweeps_on_hmean(trained, seed_table) -> None:
    neds = seed_table.filter(pl.col("method") == "NEDS")["Hmean"].to_list()
    for rival in ("GA", "GD"):
        _, best = trained.sweep(rival)
        wins = sum(hmean > best.hmean for hmean in neds)
        assert 2 * wins > len(neds), rival


def test_neds_forms_a_forget_retain_boundary(trained, seed_table) -> None:
    assert _majority(trained, "neds_auc_gain")
    assert _majority(trained, "neds_logprob_gap_vs_npo")


def test_neds_moves_neighbors_less_than_npo(trained, seed_table) -> None:
    assert _majority(trained, "neds_neighbor_kl_vs_npo")
    assert _majority(trained, "neds_neighbor_drift_vs_npo")
    assert _majority(trained, "neds_within_epsilon_vs_npo")


def test_neighbor_corruption_degrades_gracefully(trained) -> None:
    rows = {row["corruption_rate"]: row for row in trained.ablate_corruption().to_dicts()}
    clean, half, heavy = rows[0.0], rows[0.5], rows[0.8]

    assert abs(half["DirectUE"] - clean["DirectUE"]) <= 0.10
    assert abs(half["Locality"] - clean["Locality"]) <= 0.05
    assert heavy["Locality"] >= 0.7 * clean["Locality"]

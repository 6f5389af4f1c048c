from __future__ import annotations

import pytest

from unlearning_lab.exceptions import TargetSelectionError
from unlearning_lab.schemas import FiltrationConfig, SelectionConfig
from unlearning_lab.services.bench.chains import (
    chain_answers,
    eligible_targets,
    find_chains,
    select_targets,
)
from unlearning_lab.services.bench.filtration import (
    build_retain_set,
    excluded_families,
    rejection_counts,
)
from unlearning_lab.services.types import Triple

TARGET = Triple("F1", "director", "P1")


def test_find_chains_extends_the_target_forward(chain_graph) -> None:
    chains = find_chains(chain_graph, TARGET)

    assert [(chain.hops, chain.triples[-1].tail) for chain in chains] == [
        (2, "C1"),
        (2, "U1"),
        (3, "T1"),
        (3, "C2"),
    ]
    assert all(chain.triples[0] == TARGET for chain in chains)


def test_chain_answers(chain_graph) -> None:
    assert chain_answers(chain_graph, "F1", ("director", "citizenship", "capital_of")) == {"T1"}
    assert chain_answers(chain_graph, "P2", ("educated_at",)) == set()


def test_only_the_chain_bearing_target_is_eligible(chain_graph, bank) -> None:
    assert eligible_targets(chain_graph, SelectionConfig(), bank) == [TARGET]


def test_selecting_more_targets_than_exist_reports_the_maximum(chain_graph) -> None:
    with pytest.raises(TargetSelectionError) as excinfo:
        select_targets(chain_graph, 2, seed=0)
    assert excinfo.value.achievable == 1


def test_stricter_selection_leaves_no_target(chain_graph) -> None:
    strict = SelectionConfig(min_two_hop=3)
    assert select_targets(chain_graph, 1, seed=0, selection=SelectionConfig()) == [TARGET]
    assert eligible_targets(chain_graph, strict) == []


def test_retain_set_runs_schema_node_and_path_checks_in_order(chain_graph) -> None:
    selection = build_retain_set(chain_graph, TARGET, FiltrationConfig())

    assert selection.facts == (Triple("F1", "genre", "K1"),)
    stages = {decision.candidate.relation: decision.stage for decision in selection.provenance}
    assert stages == {
        "origin_country": "schema",
        "composer": "node",
        "cinematographer": "path",
        "genre": "accepted",
    }
    assert rejection_counts(selection.provenance) == {
        "schema": 1,
        "node": 1,
        "path": 1,
        "accepted": 1,
    }


def test_short_search_depth_lets_distant_facts_through(chain_graph) -> None:
    shallow = FiltrationConfig(min_geodesic=1, bfs_depth=1)

    selection = build_retain_set(chain_graph, TARGET, shallow)

    assert Triple("F1", "cinematographer", "P2") in selection.facts


def test_excluded_families_cover_every_chain_relation(chain_graph) -> None:
    families = excluded_families(chain_graph, TARGET, find_chains(chain_graph, TARGET))
    assert families == {"creative", "nationality", "education", "geography"}

from __future__ import annotations

import math

import pytest

from unlearning_lab.exceptions import GraphLookupError, TypingViolationError
from unlearning_lab.services.kg.catalog import ALL_RELATIONS
from unlearning_lab.services.kg.graph import (
    KnowledgeGraph,
    geodesic_distance,
    khop_neighborhood,
    path_exists_within_depth,
)
from unlearning_lab.services.types import Entity, Triple


def test_khop_neighborhood_follows_edges_in_both_directions(film_graph) -> None:
    assert khop_neighborhood(film_graph, "F1", 0) == {"F1"}
    assert khop_neighborhood(film_graph, "F1", 1) == {"F1", "P1"}
    assert khop_neighborhood(film_graph, "F1", 2) == {"F1", "P1", "C1"}
    # P2 is reached through the incoming citizenship edge of C1
    assert khop_neighborhood(film_graph, "F1", 3) == {"F1", "P1", "C1", "T1", "P2"}


def test_geodesic_distance(film_graph) -> None:
    assert geodesic_distance(film_graph, "F1", "F1") == 0
    assert geodesic_distance(film_graph, "F1", "T1") == 3
    assert geodesic_distance(film_graph, "T1", "F1") == 3
    assert geodesic_distance(film_graph, "F1", "L1") == math.inf


def test_path_search_respects_excluded_edges_and_entities(film_graph) -> None:
    assert path_exists_within_depth(film_graph, "F1", "C1", 2)
    assert not path_exists_within_depth(film_graph, "F1", "C1", 1)
    assert not path_exists_within_depth(
        film_graph, "F1", "C1", 3, exclude_triples=[Triple("P1", "citizenship", "C1")]
    )
    assert not path_exists_within_depth(film_graph, "P2", "T1", 3, exclude_entities=["C1"])
    assert path_exists_within_depth(film_graph, "P2", "T1", 2)


def test_hiding_a_fact_keeps_its_reversed_twin() -> None:
    forward, backward = Triple("K1", "is_a", "K2"), Triple("K2", "is_a", "K1")
    graph = KnowledgeGraph(
        [Entity("K1", "velor", "Concept"), Entity("K2", "kasim", "Concept")],
        ALL_RELATIONS,
        [forward, backward],
    )

    assert graph.undirected.number_of_edges() == 2
    assert path_exists_within_depth(graph, "K1", "K2", 1, exclude_triples=[forward])
    assert not path_exists_within_depth(
        graph, "K1", "K2", 1, exclude_triples=[forward, backward]
    )


def test_lookup_helpers(film_graph) -> None:
    assert film_graph.entity_by_label("Kesimo").id == "T1"
    assert film_graph.tails("P1", "citizenship") == ("C1",)
    assert sorted(film_graph.heads("citizenship", "C1")) == ["P1", "P2"]
    assert film_graph.degree("C1") == 4
    assert Triple("F1", "director", "P1") in film_graph
    assert film_graph.adjacent("P1", "F1")


def test_unknown_entity_raises_lookup_error(film_graph) -> None:
    with pytest.raises(GraphLookupError):
        film_graph.entity("nope")
    with pytest.raises(LookupError):
        film_graph.khop_neighborhood("nope", 1)


def test_functional_relation_with_two_tails_is_rejected() -> None:
    entities = [
        Entity("P1", "Ana", "Person"),
        Entity("C1", "Dorava", "Country"),
        Entity("C2", "Lunavi", "Country"),
    ]
    with pytest.raises(TypingViolationError):
        KnowledgeGraph(
            entities,
            ALL_RELATIONS,
            [Triple("P1", "citizenship", "C1"), Triple("P1", "citizenship", "C2")],
        )


def test_domain_mismatch_is_rejected() -> None:
    entities = [Entity("P1", "Ana", "Person"), Entity("T1", "Kesimo", "City")]
    with pytest.raises(TypingViolationError) as excinfo:
        KnowledgeGraph(entities, ALL_RELATIONS, [Triple("P1", "capital_of", "T1")])
    assert excinfo.value.triple == ("P1", "capital_of", "T1")


def test_duplicate_triples_are_dropped_and_counted() -> None:
    entities = [Entity("P1", "Ana", "Person"), Entity("C1", "Dorava", "Country")]
    graph = KnowledgeGraph(
        entities,
        ALL_RELATIONS,
        [Triple("P1", "citizenship", "C1"), Triple("P1", "citizenship", "C1")],
    )
    assert graph.triples == (Triple("P1", "citizenship", "C1"),)
    assert graph.duplicate_count == 1


def test_labels_must_be_unique_and_vocabulary_safe() -> None:
    with pytest.raises(TypingViolationError):
        KnowledgeGraph(
            [Entity("P1", "Ana", "Person"), Entity("P2", "Ana", "Person")], ALL_RELATIONS, []
        )
    with pytest.raises(TypingViolationError):
        KnowledgeGraph([Entity("P1", "Ana_Lovo", "Person")], ALL_RELATIONS, [])

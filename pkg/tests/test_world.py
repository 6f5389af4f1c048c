from __future__ import annotations

from pathlib import Path

import pytest
from django.conf import settings

from unlearning_lab.exceptions import ConfigurationError
from unlearning_lab.schemas import WorldConfig
from unlearning_lab.services.config_file import load_config
from unlearning_lab.services.kg.triples_io import dump_world, load_world
from unlearning_lab.services.kg.world import entity_totals, generate_world, validate_world_config


def _config(**updates) -> WorldConfig:
    values = {
        "counts": {"Country": 5, "City": 5},
        "pattern_quotas": {"J": 3},
        "seed": 11,
    }
    values.update(updates)
    return WorldConfig(**values)


def test_pattern_quota_creates_exactly_that_many_chain_heads() -> None:
    graph = generate_world(_config())

    people = [e for e in graph.entities.values() if e.entity_type == "Person"]
    assert len(people) == 3
    capitals = [t for t in graph.triples if t.relation == "capital_of"]
    assert len(capitals) == 5
    for person in people:
        (country,) = graph.tails(person.id, "citizenship")
        assert len(graph.tails(country, "capital_of")) == 1


def test_generation_is_deterministic_for_a_seed() -> None:
    config = _config(
        counts={"Country": 4, "City": 6, "Person": 5, "Concept": 6},
        retain_quotas={"Person": 2},
        commonsense_quotas={"is_a": 2},
    )
    first = generate_world(config)
    second = generate_world(config)

    assert first.triples == second.triples
    assert first.entities == second.entities


def test_every_generated_triple_respects_the_schema() -> None:
    graph = generate_world(
        _config(
            counts={"Country": 3, "City": 4, "Person": 4, "Film": 2, "Language": 2},
            pattern_quotas={"B": 2, "F": 1, "K": 1},
        )
    )
    for triple in graph.triples:
        relation = graph.relation(triple.relation)
        assert graph.entity(triple.head).entity_type == relation.domain_type
        assert graph.entity(triple.tail).entity_type == relation.range_type


def test_fresh_pattern_heads_are_counted() -> None:
    totals = entity_totals(_config(pattern_quotas={"J": 3, "F": 2, "B": 1}))
    assert totals["Person"] == 5
    assert totals["Film"] == 1


def test_capital_pattern_needs_a_city_per_country() -> None:
    with pytest.raises(ConfigurationError, match="pattern J"):
        validate_world_config(_config(counts={"Country": 5, "City": 3}))


def test_pattern_without_required_pool_is_rejected() -> None:
    with pytest.raises(ConfigurationError, match="requires at least one Language"):
        generate_world(_config(pattern_quotas={"K": 1}))


def test_unknown_commonsense_relation_is_rejected() -> None:
    with pytest.raises(ConfigurationError, match="unknown relation"):
        validate_world_config(_config(commonsense_quotas={"citizenship": 1}))


def test_negative_counts_fail_validation() -> None:
    with pytest.raises(ValueError):
        WorldConfig(counts={"Person": -1})


def test_value_entities_outside_every_fact_are_dropped() -> None:
    config = load_config(Path(settings.LAB_CONFIG_FILE)).world
    graph = generate_world(config)

    concepts = [e for e in graph.entities.values() if e.entity_type == "Concept"]
    isolated = [e for e in concepts if graph.degree(e.id) == 0]
    # only the declared commonsense concepts may sit outside every fact
    assert len(isolated) <= config.count("Concept")


def test_dumped_world_reloads_every_entity_with_its_type(tmp_path: Path) -> None:
    graph = generate_world(load_config(Path(settings.LAB_CONFIG_FILE)).world)
    dump_world(graph, tmp_path)

    loaded = load_world(tmp_path)

    assert sorted((e.label, e.entity_type) for e in loaded.entities.values()) == sorted(
        (e.label, e.entity_type) for e in graph.entities.values()
    )
    assert len(loaded.triples) == len(graph.triples)

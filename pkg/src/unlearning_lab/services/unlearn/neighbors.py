"""Correlated-neighbor mining, neighbor corruption and the retain training pool."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence

import numpy as np
from django.conf import settings

from unlearning_lab.exceptions import CorruptionError, NeighborPoolError
from unlearning_lab.services.bench.probes import answer_leaks
from unlearning_lab.services.bench.templates import TemplateBank, render
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import (
    BenchmarkCase,
    NeighborItem,
    NeighborSet,
    QAPair,
    Triple,
)

logger = logging.getLogger(__name__)

HEAD_WEIGHT = 2.0
TAIL_WEIGHT = 1.0


def direct_pair(graph: KnowledgeGraph, bank: TemplateBank, triple: Triple) -> QAPair:
    question = render(bank.get(triple.relation).qa[0], head=graph.label(triple.head))
    return QAPair(question=question, answer=graph.label(triple.tail))


def _usable(graph: KnowledgeGraph, bank: TemplateBank, triple: Triple) -> bool:
    if not graph.relation(triple.relation).functional or triple.relation not in bank:
        return False
    pair = direct_pair(graph, bank, triple)
    return not answer_leaks(pair.question, pair.answer)


def neighbor_score(target: Triple, candidate: Triple, distance: float) -> float:
    mentions_head = target.head in (candidate.head, candidate.tail)
    mentions_tail = target.tail in (candidate.head, candidate.tail)
    return HEAD_WEIGHT * mentions_head + TAIL_WEIGHT * mentions_tail + 1.0 / (1.0 + distance)


def _normalized(
    items: Sequence[NeighborItem], weights: Sequence[float]
) -> tuple[NeighborItem, ...]:
    total = float(sum(weights))
    return tuple(
        NeighborItem(item.triple, item.pair, weight / total, item.score)
        for item, weight in zip(items, weights, strict=True)
    )


def mine_neighbors(
    graph: KnowledgeGraph,
    target: Triple,
    bank: TemplateBank,
    k: int,
    *,
    hops: int = 2,
    excluded: Iterable[Triple] = (),
    uniform_weights: bool = False,
) -> NeighborSet:
    """Top-k facts around the target, weighted by their normalized connectivity score.

    Candidates mention the target head or tail, lie inside the head's ``hops`` neighborhood
    and have a single, different answer. Ties go to the higher-degree subject, then label.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    region = graph.khop_neighborhood(target.head, hops)
    distances = graph.distances_from(target.head)
    answer = graph.label(target.tail)
    blocked = {target, *excluded}
    candidates: list[tuple[float, int, tuple[str, str, str], Triple]] = []
    for triple in sorted(set(graph.mentioning(target.head)) | set(graph.mentioning(target.tail))):
        if triple in blocked or triple.head not in region or triple.tail not in region:
            continue
        if not _usable(graph, bank, triple) or graph.label(triple.tail) == answer:
            continue
        score = neighbor_score(target, triple, distances.get(triple.head, math.inf))
        key = (graph.label(triple.head), triple.relation, graph.label(triple.tail))
        candidates.append((score, graph.degree(triple.head), key, triple))
    if not candidates:
        raise NeighborPoolError(
            f"no correlated neighbors for {target}; widen the hop radius (currently {hops})"
        )
    candidates.sort(key=lambda entry: (-entry[0], -entry[1], entry[2]))
    chosen = candidates[:k]
    items = [
        NeighborItem(triple, direct_pair(graph, bank, triple), score, score)
        for score, _, _, triple in chosen
    ]
    weights = [1.0] * len(items) if uniform_weights else [item.score for item in items]
    return NeighborSet(target=target, items=_normalized(items, weights), k=k)


def replacement_count(rate: float, size: int) -> int:
    # round half up
    return min(size, math.floor(rate * size + 0.5))


def corrupt_neighbors(
    graph: KnowledgeGraph,
    neighbors: NeighborSet,
    rate: float,
    seed: int,
    bank: TemplateBank,
    *,
    min_distance: int | None = None,
    excluded: Iterable[Triple] = (),
) -> NeighborSet:
    """Swap a fraction of the anchors for facts about far-away subjects."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"corruption rate must lie in [0, 1], got {rate}")
    count = replacement_count(rate, len(neighbors.items))
    if count == 0:
        return neighbors
    min_distance = settings.LAB_CORRUPTION_MIN_DISTANCE if min_distance is None else min_distance
    distances = graph.distances_from(neighbors.target.head)
    answer = graph.label(neighbors.target.tail)
    blocked = {neighbors.target, *excluded, *(item.triple for item in neighbors.items)}
    pool = [
        triple
        for triple in graph.triples
        if distances.get(triple.head, math.inf) > min_distance
        and triple not in blocked
        and _usable(graph, bank, triple)
        and graph.label(triple.tail) != answer
    ]
    if len(pool) < count:
        raise CorruptionError(
            f"need {count} facts about entities farther than {min_distance} hops from "
            f"{neighbors.target.head}, found {len(pool)}"
        )
    rng = np.random.default_rng(seed)
    slots = {int(i) for i in rng.choice(len(neighbors.items), size=count, replace=False)}
    picks = iter(int(i) for i in rng.choice(len(pool), size=count, replace=False))
    items: list[NeighborItem] = []
    weights: list[float] = []
    for index, item in enumerate(neighbors.items):
        if index in slots:
            triple = pool[next(picks)]
            items.append(NeighborItem(triple, direct_pair(graph, bank, triple), 0.0, 0.0))
            weights.append(1.0 / len(neighbors.items))
        else:
            items.append(item)
            weights.append(item.weight)
    logger.debug("corrupted %d of %d neighbors of %s", count, len(items), neighbors.target)
    return NeighborSet(target=neighbors.target, items=_normalized(items, weights), k=neighbors.k)


def retain_training_pool(
    graph: KnowledgeGraph, bank: TemplateBank, cases: Sequence[BenchmarkCase]
) -> list[QAPair]:
    """Direct QA pairs of facts far from every case, never used for evaluation."""
    near = set().union(*(case.forget_neighborhood for case in cases)) if cases else set()
    blocked = {case.target for case in cases}
    for case in cases:
        blocked.update(case.retain_facts)
    pool = [
        direct_pair(graph, bank, triple)
        for triple in graph.triples
        if triple not in blocked
        and triple.head not in near
        and _usable(graph, bank, triple)
    ]
    logger.info("retain training pool holds %d pairs", len(pool))
    return pool


def case_neighbor_sets(
    graph: KnowledgeGraph,
    bank: TemplateBank,
    cases: Sequence[BenchmarkCase],
    *,
    k: int,
    hops: int,
    uniform_weights: bool = False,
    corruption_rate: float = 0.0,
    seed: int = 0,
) -> dict[str, NeighborSet]:
    """Neighbor sets keyed by case id; no set contains a forget target or a retain fact."""
    excluded: set[Triple] = {case.target for case in cases}
    for case in cases:
        excluded.update(case.retain_facts)
    sets = {}
    for index, case in enumerate(cases):
        neighbors = mine_neighbors(
            graph,
            case.target,
            bank,
            k,
            hops=hops,
            excluded=excluded - {case.target},
            uniform_weights=uniform_weights,
        )
        if corruption_rate > 0:
            neighbors = corrupt_neighbors(
                graph, neighbors, corruption_rate, seed + index, bank, excluded=excluded
            )
        sets[case.case_id] = neighbors
    return sets

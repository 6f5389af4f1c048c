from __future__ import annotations

import numpy as np

from unlearning_lab.exceptions import TargetSelectionError
from unlearning_lab.schemas import SelectionConfig
from unlearning_lab.services.bench.templates import TemplateBank
from unlearning_lab.services.kg.catalog import CHAIN_SEQUENCES
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import Chain, Triple


def find_chains(graph: KnowledgeGraph, target: Triple) -> tuple[Chain, ...]:
    """2- and 3-hop chains whose first edge is ``target``, following forward edges."""
    chains: list[Chain] = []
    for relations, pattern in CHAIN_SEQUENCES.items():
        if relations[0] != target.relation:
            continue
        paths: list[tuple[Triple, ...]] = [(target,)]
        for relation in relations[1:]:
            extended: list[tuple[Triple, ...]] = []
            for path in paths:
                visited = {path[0].head, *(t.tail for t in path)}
                for tail in graph.tails(path[-1].tail, relation):
                    if tail not in visited:
                        extended.append((*path, Triple(path[-1].tail, relation, tail)))
            paths = extended
        chains.extend(Chain(pattern=pattern, triples=path) for path in paths)
    return tuple(sorted(chains, key=lambda chain: (chain.hops, chain.pattern, chain.triples)))


def chain_answers(graph: KnowledgeGraph, head: str, relations: tuple[str, ...]) -> set[str]:
    frontier = {head}
    for relation in relations:
        frontier = {tail for entity in frontier for tail in graph.tails(entity, relation)}
    return frontier


def is_eligible_target(
    graph: KnowledgeGraph,
    triple: Triple,
    selection: SelectionConfig,
    bank: TemplateBank | None = None,
) -> bool:
    relation = graph.relation(triple.relation)
    if not relation.functional:
        return False
    if bank is not None and (relation.id not in bank or not bank.get(relation.id).inverse_qa):
        return False
    if len(graph.heads(triple.relation, triple.tail)) != 1:
        return False
    chains = find_chains(graph, triple)
    two_hop = sum(1 for chain in chains if chain.hops == 2)
    three_hop = sum(1 for chain in chains if chain.hops == 3)
    return two_hop >= selection.min_two_hop and three_hop >= selection.min_three_hop


def eligible_targets(
    graph: KnowledgeGraph, selection: SelectionConfig, bank: TemplateBank | None = None
) -> list[Triple]:
    return [
        triple for triple in graph.triples if is_eligible_target(graph, triple, selection, bank)
    ]


def shuffled_targets(
    graph: KnowledgeGraph, selection: SelectionConfig, seed: int, bank: TemplateBank | None = None
) -> list[Triple]:
    candidates = eligible_targets(graph, selection, bank)
    order = np.random.default_rng(seed).permutation(len(candidates))
    return [candidates[int(index)] for index in order]


def select_targets(
    graph: KnowledgeGraph,
    n: int,
    seed: int,
    selection: SelectionConfig | None = None,
    bank: TemplateBank | None = None,
) -> list[Triple]:
    selection = selection or SelectionConfig()
    candidates = shuffled_targets(graph, selection, seed, bank)
    if n > len(candidates):
        raise TargetSelectionError(
            f"requested {n} targets but only {len(candidates)} carry the required chains",
            achievable=len(candidates),
        )
    return candidates[:n]

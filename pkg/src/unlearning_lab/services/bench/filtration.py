from __future__ import annotations

from collections import Counter
from collections.abc import Iterable

from unlearning_lab.schemas import FiltrationConfig
from unlearning_lab.services.bench.chains import find_chains
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import Chain, FiltrationDecision, RetainSelection, Triple


def excluded_families(
    graph: KnowledgeGraph, target: Triple, chains: Iterable[Chain]
) -> frozenset[str]:
    relations = {target.relation}
    for chain in chains:
        relations.update(triple.relation for triple in chain.triples)
    return frozenset(graph.relation(relation).family for relation in relations)


def build_retain_set(
    graph: KnowledgeGraph,
    target: Triple,
    config: FiltrationConfig | None = None,
    chains: tuple[Chain, ...] | None = None,
) -> RetainSelection:
    """Facts about the target's subject that pass schema, node and path separation.

    Candidates share the subject, so the path check hides both the target edge and the
    candidate edge; otherwise every candidate would sit two hops from the target object.
    """
    config = config or FiltrationConfig()
    graph.entity(target.head)
    if chains is None:
        chains = find_chains(graph, target)
    families = excluded_families(graph, target, chains)
    accepted: list[Triple] = []
    decisions: list[FiltrationDecision] = []

    for candidate in graph.outgoing(target.head):
        if candidate == target:
            continue
        family = graph.relation(candidate.relation).family
        if family in families:
            decisions.append(
                FiltrationDecision(
                    candidate, "schema", f"family {family} overlaps the forget chains"
                )
            )
            continue
        if candidate.tail == target.tail or graph.adjacent(target.tail, candidate.tail):
            decisions.append(
                FiltrationDecision(candidate, "node", "object shares a direct edge with the target")
            )
            continue
        if graph.path_exists_within_depth(
            target.tail,
            candidate.tail,
            config.search_depth,
            exclude_triples=(target, candidate),
        ):
            decisions.append(
                FiltrationDecision(
                    candidate, "path", f"latent path of length <= {config.search_depth}"
                )
            )
            continue
        accepted.append(candidate)
        decisions.append(FiltrationDecision(candidate, "accepted", "orthogonal"))

    return RetainSelection(facts=tuple(accepted), provenance=tuple(decisions))


def rejection_counts(decisions: Iterable[FiltrationDecision]) -> dict[str, int]:
    counts = Counter(decision.stage for decision in decisions)
    return {stage: counts.get(stage, 0) for stage in ("schema", "node", "path", "accepted")}

from __future__ import annotations

import math
import re
from collections.abc import Iterable
from functools import cached_property

import networkx as nx

from unlearning_lab.exceptions import GraphLookupError, TypingViolationError
from unlearning_lab.services.types import Entity, RelationType, Triple

LABEL_PATTERN = re.compile(r"^[A-Za-z0-9]+( [A-Za-z0-9]+)*$")


class KnowledgeGraph:
    """Typed, immutable triple store with undirected traversal helpers."""

    def __init__(
        self,
        entities: Iterable[Entity],
        relation_types: Iterable[RelationType],
        triples: Iterable[Triple],
    ) -> None:
        self.entities: dict[str, Entity] = {}
        self._by_label: dict[str, str] = {}
        for entity in entities:
            if entity.id in self.entities:
                raise TypingViolationError(
                    "duplicate entity id", triple=(entity.id, "", entity.label)
                )
            if entity.label in self._by_label:
                raise TypingViolationError(
                    "duplicate entity label", triple=(entity.id, "", entity.label)
                )
            if not LABEL_PATTERN.match(entity.label):
                raise TypingViolationError(
                    "label is not vocabulary safe", triple=(entity.id, "", entity.label)
                )
            self.entities[entity.id] = entity
            self._by_label[entity.label] = entity.id

        self.relation_types: dict[str, RelationType] = {}
        for relation in relation_types:
            if not relation.family:
                raise TypingViolationError(
                    "relation family is empty", triple=("", relation.id, "")
                )
            self.relation_types[relation.id] = relation

        unique: set[Triple] = set()
        self.duplicate_count = 0
        for triple in triples:
            if triple in unique:
                self.duplicate_count += 1
                continue
            self._check_typing(triple)
            unique.add(triple)
        self.triples: tuple[Triple, ...] = tuple(sorted(unique))

        self._out: dict[str, list[Triple]] = {}
        self._in: dict[str, list[Triple]] = {}
        for triple in self.triples:
            self._out.setdefault(triple.head, []).append(triple)
            self._in.setdefault(triple.tail, []).append(triple)

        for head, outgoing in self._out.items():
            seen: set[str] = set()
            for triple in outgoing:
                if not self.relation_types[triple.relation].functional:
                    continue
                if triple.relation in seen:
                    raise TypingViolationError(
                        f"functional relation has several tails for {head}",
                        triple=triple.as_tuple(),
                    )
                seen.add(triple.relation)

    def _check_typing(self, triple: Triple) -> None:
        relation = self.relation_types.get(triple.relation)
        if relation is None:
            raise TypingViolationError("unknown relation", triple=triple.as_tuple())
        head = self.entities.get(triple.head)
        tail = self.entities.get(triple.tail)
        if head is None or tail is None:
            raise TypingViolationError("unknown entity", triple=triple.as_tuple())
        if head.entity_type != relation.domain_type:
            raise TypingViolationError(
                f"head type {head.entity_type} is not {relation.domain_type}",
                triple=triple.as_tuple(),
            )
        if tail.entity_type != relation.range_type:
            raise TypingViolationError(
                f"tail type {tail.entity_type} is not {relation.range_type}",
                triple=triple.as_tuple(),
            )

    @cached_property
    def undirected(self) -> nx.MultiGraph:
        graph = nx.MultiGraph()
        graph.add_nodes_from(sorted(self.entities))
        for triple in self.triples:
            graph.add_edge(triple.head, triple.tail, key=triple)
        return nx.freeze(graph)

    def __contains__(self, item: object) -> bool:
        if isinstance(item, Triple):
            return item in self._triple_set
        return item in self.entities

    @cached_property
    def _triple_set(self) -> frozenset[Triple]:
        return frozenset(self.triples)

    def entity(self, entity_id: str) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError as exc:
            raise GraphLookupError(f"unknown entity {entity_id!r}") from exc

    def relation(self, relation_id: str) -> RelationType:
        try:
            return self.relation_types[relation_id]
        except KeyError as exc:
            raise GraphLookupError(f"unknown relation {relation_id!r}") from exc

    def entity_by_label(self, label: str) -> Entity:
        entity_id = self._by_label.get(label)
        if entity_id is None:
            raise GraphLookupError(f"no entity labelled {label!r}")
        return self.entities[entity_id]

    def label(self, entity_id: str) -> str:
        return self.entity(entity_id).label

    def outgoing(self, entity_id: str) -> tuple[Triple, ...]:
        self.entity(entity_id)
        return tuple(self._out.get(entity_id, ()))

    def incoming(self, entity_id: str) -> tuple[Triple, ...]:
        self.entity(entity_id)
        return tuple(self._in.get(entity_id, ()))

    def tails(self, head: str, relation: str) -> tuple[str, ...]:
        return tuple(t.tail for t in self._out.get(head, ()) if t.relation == relation)

    def heads(self, relation: str, tail: str) -> tuple[str, ...]:
        return tuple(t.head for t in self._in.get(tail, ()) if t.relation == relation)

    def mentioning(self, entity_id: str) -> tuple[Triple, ...]:
        return tuple(sorted(set(self.outgoing(entity_id)) | set(self.incoming(entity_id))))

    def degree(self, entity_id: str) -> int:
        self.entity(entity_id)
        return int(self.undirected.degree(entity_id))

    def adjacent(self, a: str, b: str) -> bool:
        return bool(self.undirected.has_edge(a, b))

    def khop_neighborhood(self, entity_id: str, k: int) -> frozenset[str]:
        self.entity(entity_id)
        if k < 0:
            raise ValueError("k must be >= 0")
        reached = nx.single_source_shortest_path_length(self.undirected, entity_id, cutoff=k)
        return frozenset(reached)

    def geodesic_distance(self, a: str, b: str) -> float:
        self.entity(a)
        self.entity(b)
        try:
            return int(nx.shortest_path_length(self.undirected, a, b))
        except nx.NetworkXNoPath:
            return math.inf

    def distances_from(self, entity_id: str) -> dict[str, int]:
        self.entity(entity_id)
        return dict(nx.single_source_shortest_path_length(self.undirected, entity_id))

    def path_exists_within_depth(
        self,
        a: str,
        b: str,
        depth: int,
        *,
        exclude_triples: Iterable[Triple] = (),
        exclude_entities: Iterable[str] = (),
    ) -> bool:
        self.entity(a)
        self.entity(b)
        if depth < 1:
            raise ValueError("depth must be >= 1")
        hidden_edges = []
        for triple in exclude_triples:
            hidden_edges.append((triple.head, triple.tail, triple))
            hidden_edges.append((triple.tail, triple.head, triple))
        hidden_nodes = set(exclude_entities) - {a, b}
        view = nx.restricted_view(self.undirected, hidden_nodes, hidden_edges)
        reachable = nx.single_source_shortest_path_length(view, a, cutoff=depth)
        return b in reachable


def khop_neighborhood(graph: KnowledgeGraph, entity_id: str, k: int) -> frozenset[str]:
    return graph.khop_neighborhood(entity_id, k)


def geodesic_distance(graph: KnowledgeGraph, a: str, b: str) -> float:
    return graph.geodesic_distance(a, b)


def path_exists_within_depth(
    graph: KnowledgeGraph,
    a: str,
    b: str,
    depth: int,
    *,
    exclude_triples: Iterable[Triple] = (),
    exclude_entities: Iterable[str] = (),
) -> bool:
    return graph.path_exists_within_depth(
        a, b, depth, exclude_triples=exclude_triples, exclude_entities=exclude_entities
    )

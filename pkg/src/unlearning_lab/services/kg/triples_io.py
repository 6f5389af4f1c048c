from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import polars as pl

from unlearning_lab.exceptions import TripleParseError, TypingViolationError
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import ENTITY_TYPES, Entity, EntityType, RelationType, Triple

logger = logging.getLogger(__name__)

TRIPLES_FILENAME = "triples.tsv"
SCHEMA_FILENAME = "schema.tsv"
ENTITIES_FILENAME = "entities.tsv"
SCHEMA_COLUMNS = ["relation", "domain", "range", "functional", "family"]
ENTITY_COLUMNS = ["label", "type"]


@dataclass(slots=True, frozen=True)
class LoadReport:
    triple_lines: int
    duplicate_count: int


def dump_world(graph: KnowledgeGraph, directory: Path) -> tuple[Path, Path]:
    """Write the triples TSV with its relation schema and entity-type sidecars."""
    directory.mkdir(parents=True, exist_ok=True)
    triples_path = directory / TRIPLES_FILENAME
    schema_path = directory / SCHEMA_FILENAME

    rows = sorted(
        (graph.label(t.head), graph.relation(t.relation).label, graph.label(t.tail))
        for t in graph.triples
    )
    pl.DataFrame(rows, schema=["head", "relation", "tail"], orient="row").write_csv(
        triples_path, separator="\t", include_header=False
    )

    schema_frame = pl.DataFrame(
        {
            "relation": [r.label for r in graph.relation_types.values()],
            "domain": [r.domain_type for r in graph.relation_types.values()],
            "range": [r.range_type for r in graph.relation_types.values()],
            "functional": [r.functional for r in graph.relation_types.values()],
            "family": [r.family for r in graph.relation_types.values()],
        }
    ).sort("relation")
    schema_frame.write_csv(schema_path, separator="\t")

    pl.DataFrame(
        {
            "label": [entity.label for entity in graph.entities.values()],
            "type": [entity.entity_type for entity in graph.entities.values()],
        }
    ).sort("label").write_csv(directory / ENTITIES_FILENAME, separator="\t")
    return triples_path, schema_path


def load_schema(schema_path: Path) -> list[RelationType]:
    try:
        frame = pl.read_csv(
            schema_path,
            separator="\t",
            schema={column: pl.String for column in SCHEMA_COLUMNS},
            quote_char=None,
        )
    except (pl.exceptions.PolarsError, OSError) as exc:
        raise TripleParseError(f"unreadable schema file: {exc}", line_number=1) from exc

    relations: list[RelationType] = []
    for index, row in enumerate(frame.iter_rows(named=True)):
        line_number = index + 2
        if any(row[column] in (None, "") for column in SCHEMA_COLUMNS):
            raise TripleParseError("schema record has an empty field", line_number=line_number)
        for column in ("domain", "range"):
            if row[column] not in ENTITY_TYPES:
                raise TripleParseError(
                    f"unknown entity type {row[column]!r}", line_number=line_number
                )
        functional = row["functional"].strip().lower()
        if functional not in {"true", "false"}:
            raise TripleParseError(
                f"functional flag must be true or false, got {row['functional']!r}",
                line_number=line_number,
            )
        relations.append(
            RelationType(
                id=row["relation"],
                label=row["relation"],
                domain_type=row["domain"],
                range_type=row["range"],
                functional=functional == "true",
                family=row["family"],
            )
        )
    return relations


def load_entity_types(entities_path: Path) -> dict[str, EntityType]:
    try:
        frame = pl.read_csv(
            entities_path,
            separator="\t",
            schema={column: pl.String for column in ENTITY_COLUMNS},
            quote_char=None,
        )
    except (pl.exceptions.PolarsError, OSError) as exc:
        raise TripleParseError(f"unreadable entity file: {exc}", line_number=1) from exc

    declared: dict[str, EntityType] = {}
    for index, row in enumerate(frame.iter_rows(named=True)):
        line_number = index + 2
        label, entity_type = row["label"], row["type"]
        if not label or not entity_type:
            raise TripleParseError("entity record has an empty field", line_number=line_number)
        if entity_type not in ENTITY_TYPES:
            raise TripleParseError(
                f"unknown entity type {entity_type!r}", line_number=line_number
            )
        if declared.setdefault(label, entity_type) != entity_type:
            raise TripleParseError(
                f"entity {label!r} is declared twice with different types",
                line_number=line_number,
            )
    return declared


def prefixed_type(label: str) -> EntityType | None:
    """``City_x`` declares a City; labels without a known type prefix declare nothing."""
    prefix, separator, rest = label.partition("_")
    if separator and rest and prefix in ENTITY_TYPES:
        return prefix
    return None


def load_triples_with_report(
    path: Path, schema_path: Path, entities_path: Path | None = None
) -> tuple[KnowledgeGraph, LoadReport]:
    """Parse a triples TSV, checking every line against the relation's domain and range.

    An endpoint's type comes from the entity sidecar when given, then from a ``Type_``
    label prefix, then from the first line that used the label.
    """
    relations = {relation.label: relation for relation in load_schema(schema_path)}
    declared = load_entity_types(entities_path) if entities_path is not None else {}
    entity_types: dict[str, EntityType] = dict(declared)
    entity_ids: dict[str, str] = {label: f"E{index:05d}" for index, label in enumerate(declared)}
    triples: list[Triple] = []
    line_count = 0

    with path.open(encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            line_count += 1
            fields = line.split("\t")
            if len(fields) != 3 or not all(field.strip() for field in fields):
                raise TripleParseError(
                    f"expected 3 tab-separated fields, got {len(fields)}", line_number=line_number
                )
            head_label, relation_label, tail_label = (field.strip() for field in fields)
            relation = relations.get(relation_label)
            if relation is None:
                raise TripleParseError(
                    f"relation {relation_label!r} is not declared in the schema",
                    line_number=line_number,
                )
            endpoints = ((head_label, relation.domain_type), (tail_label, relation.range_type))
            for label, expected in endpoints:
                known = entity_types.get(label) or prefixed_type(label) or expected
                if known != expected:
                    raise TypingViolationError(
                        f"line {line_number}: {label!r} is a {known}, relation "
                        f"{relation_label} expects {expected}",
                        triple=(head_label, relation_label, tail_label),
                    )
                entity_types[label] = known
                if label not in entity_ids:
                    entity_ids[label] = f"E{len(entity_ids):05d}"
            triples.append(Triple(entity_ids[head_label], relation.id, entity_ids[tail_label]))

    entities = [
        Entity(id=entity_id, label=label, entity_type=entity_types[label])
        for label, entity_id in entity_ids.items()
    ]
    graph = KnowledgeGraph(entities, relations.values(), triples)
    if graph.duplicate_count:
        logger.warning("dropped %d duplicate triple(s) from %s", graph.duplicate_count, path)
    return graph, LoadReport(triple_lines=line_count, duplicate_count=graph.duplicate_count)


def load_triples(
    path: Path, schema_path: Path, entities_path: Path | None = None
) -> KnowledgeGraph:
    graph, _ = load_triples_with_report(path, schema_path, entities_path)
    return graph


def load_world(directory: Path) -> KnowledgeGraph:
    entities_path = directory / ENTITIES_FILENAME
    return load_triples(
        directory / TRIPLES_FILENAME,
        directory / SCHEMA_FILENAME,
        entities_path if entities_path.exists() else None,
    )

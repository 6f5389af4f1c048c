"""Relation schema, chain patterns and retain property pools of the synthetic world."""

from __future__ import annotations

from dataclasses import dataclass

from unlearning_lab.services.types import EntityType, RelationType


def _relation(
    relation_id: str,
    domain: EntityType,
    range_: EntityType,
    family: str,
    *,
    functional: bool = True,
) -> RelationType:
    return RelationType(
        id=relation_id,
        label=relation_id,
        domain_type=domain,
        range_type=range_,
        functional=functional,
        family=family,
    )


CORE_RELATIONS: tuple[RelationType, ...] = (
    _relation("capital_of", "Country", "City", "geography"),
    _relation("hq_location", "Organization", "City", "geography"),
    _relation("city_country", "City", "Country", "geography"),
    _relation("university_country", "University", "Country", "geography"),
    _relation("director", "Film", "Person", "creative"),
    _relation("producer", "Film", "Person", "creative"),
    _relation("performer", "Work", "Person", "creative"),
    _relation("citizenship", "Person", "Country", "nationality"),
    _relation("origin_country", "Film", "Country", "nationality"),
    _relation("educated_at", "Person", "University", "education"),
    _relation("official_language", "Country", "Language", "language"),
    _relation("native_language", "Person", "Language", "language"),
)

RETAIN_RELATIONS: tuple[RelationType, ...] = (
    _relation("occupation", "Person", "Concept", "occupation"),
    _relation("award", "Person", "Concept", "award"),
    _relation("employer", "Person", "Organization", "employer"),
    _relation("notable_work", "Person", "Work", "notable_work"),
    _relation("birth_place", "Person", "City", "birth"),
    _relation("birth_year", "Person", "Concept", "birth"),
    _relation("gender", "Person", "Concept", "gender"),
    _relation("father", "Person", "Person", "kinship"),
    _relation("mother", "Person", "Person", "kinship"),
    _relation("industry", "Organization", "Concept", "industry"),
    _relation("founded_by", "Organization", "Person", "founder"),
    _relation("inception", "Organization", "Concept", "inception"),
    _relation("org_named_after", "Organization", "Person", "eponym"),
    _relation("legal_form", "Organization", "Concept", "legal_form"),
    _relation("film_language", "Film", "Language", "film_language"),
    _relation("publication_year", "Film", "Concept", "publication"),
    _relation("genre", "Film", "Concept", "genre"),
    _relation("composer", "Film", "Person", "composer"),
    _relation("based_on", "Film", "Work", "adaptation"),
    _relation("cinematographer", "Film", "Person", "cinematography"),
    _relation("broadcaster", "Film", "Organization", "broadcaster"),
    _relation("present_in_work", "Work", "Work", "appearance"),
    _relation("work_genre", "Work", "Concept", "genre"),
    _relation("release_year", "Work", "Concept", "publication"),
    _relation("continent", "Country", "Concept", "continent"),
    _relation("head_of_state_office", "Country", "Concept", "government"),
    _relation("highest_point", "Country", "Concept", "elevation"),
    _relation("lowest_point", "Country", "Concept", "elevation"),
    _relation("time_zone", "Country", "Concept", "time_zone"),
    _relation("water_body", "Country", "Concept", "water_body"),
    _relation("central_bank", "Country", "Organization", "central_bank"),
    _relation("city_time_zone", "City", "Concept", "time_zone"),
    _relation("city_water_body", "City", "Concept", "water_body"),
    _relation("city_named_after", "City", "Person", "eponym"),
)

COMMONSENSE_RELATIONS: tuple[RelationType, ...] = (
    _relation("is_a", "Concept", "Concept", "taxonomy", functional=False),
    _relation("part_of", "Concept", "Concept", "partonomy", functional=False),
    _relation("used_for", "Concept", "Concept", "function", functional=False),
    _relation("capable_of", "Concept", "Concept", "capability", functional=False),
    _relation("at_location", "Concept", "Concept", "location", functional=False),
)

ALL_RELATIONS: tuple[RelationType, ...] = CORE_RELATIONS + RETAIN_RELATIONS + COMMONSENSE_RELATIONS
RELATIONS_BY_ID: dict[str, RelationType] = {relation.id: relation for relation in ALL_RELATIONS}

RETAIN_POOLS: dict[EntityType, tuple[str, ...]] = {}
for _relation_type in RETAIN_RELATIONS:
    RETAIN_POOLS.setdefault(_relation_type.domain_type, ())
    RETAIN_POOLS[_relation_type.domain_type] += (_relation_type.id,)


@dataclass(slots=True, frozen=True)
class PatternStep:
    relation: str
    inverse: bool = False


@dataclass(slots=True, frozen=True)
class ChainPattern:
    id: str
    head_type: EntityType
    steps: tuple[PatternStep, ...]

    @property
    def hops(self) -> int:
        return len(self.steps)

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(step.relation for step in self.steps)


def _pattern(pattern_id: str, head_type: EntityType, *relations: str) -> ChainPattern:
    steps = tuple(
        PatternStep(relation.removeprefix("~"), inverse=relation.startswith("~"))
        for relation in relations
    )
    return ChainPattern(id=pattern_id, head_type=head_type, steps=steps)


PATTERNS: dict[str, ChainPattern] = {
    pattern.id: pattern
    for pattern in (
        _pattern("A", "Organization", "hq_location", "city_country"),
        _pattern("B", "Film", "director", "citizenship"),
        _pattern("C", "Organization", "hq_location", "city_country", "capital_of"),
        _pattern("D", "Film", "director", "citizenship", "capital_of"),
        _pattern("E", "Work", "performer", "citizenship", "capital_of"),
        _pattern("F", "Country", "~citizenship", "native_language"),
        _pattern("G", "Organization", "hq_location", "city_country", "official_language"),
        _pattern("H", "Work", "performer", "citizenship"),
        _pattern("I", "Film", "origin_country", "capital_of"),
        _pattern("J", "Person", "citizenship", "capital_of"),
        _pattern("K", "Film", "origin_country", "official_language"),
        _pattern("L", "Film", "director", "educated_at", "university_country"),
        _pattern("S", "Film", "producer", "citizenship", "capital_of"),
        _pattern("T", "Film", "producer", "citizenship", "official_language"),
        _pattern("U", "Person", "educated_at", "university_country"),
        _pattern("V", "Person", "educated_at", "university_country", "capital_of"),
    )
}


def _chain_sequences() -> dict[tuple[str, ...], str]:
    """Forward relation sequences of 2 or 3 hops, closed under contiguous sub-paths."""
    sequences: dict[tuple[str, ...], str] = {}
    for pattern in PATTERNS.values():
        for start in range(pattern.hops):
            for end in range(start + 2, pattern.hops + 1):
                steps = pattern.steps[start:end]
                if any(step.inverse for step in steps):
                    continue
                name = (
                    pattern.id
                    if (start, end) == (0, pattern.hops)
                    else f"{pattern.id}[{start}:{end}]"
                )
                key = tuple(step.relation for step in steps)
                current = sequences.get(key)
                if current is None or (len(name), name) < (len(current), current):
                    sequences[key] = name
    return dict(sorted(sequences.items()))


CHAIN_SEQUENCES: dict[tuple[str, ...], str] = _chain_sequences()

# Suffix words appended to generated labels, per entity type.
TYPE_SUFFIXES: dict[EntityType, tuple[str, ...]] = {
    "Person": (),
    "Film": ("film", "saga", "story", "chronicle"),
    "Organization": ("corporation", "group", "company", "foundation"),
    "Country": ("republic", "kingdom", "federation"),
    "City": ("city", "port", "town"),
    "University": ("university", "institute", "college"),
    "Work": ("song", "album", "novel", "ballad"),
    "Language": ("language",),
    "Concept": ("thing", "notion", "device", "creature"),
}

# Concept-valued retain relations draw tails from value pools of these kinds.
VALUE_KINDS: dict[str, tuple[str, ...]] = {
    "occupation": ("trade", "craft", "profession"),
    "award": ("prize", "medal", "honor"),
    "year": (),
    "gender": (),
    "industry": ("industry", "sector"),
    "legal_form": ("partnership", "cooperative", "trust"),
    "genre": ("drama", "comedy", "thriller", "western", "ballad"),
    "continent": ("continent",),
    "office": ("chancellor", "president", "monarch"),
    "summit": ("peak", "mountain", "summit"),
    "basin": ("basin", "valley", "depression"),
    "time_zone": ("time",),
    "water": ("sea", "lake", "river", "bay"),
}

RETAIN_VALUE_KIND: dict[str, str] = {
    "occupation": "occupation",
    "award": "award",
    "birth_year": "year",
    "gender": "gender",
    "industry": "industry",
    "inception": "year",
    "legal_form": "legal_form",
    "publication_year": "year",
    "genre": "genre",
    "work_genre": "genre",
    "release_year": "year",
    "continent": "continent",
    "head_of_state_office": "office",
    "highest_point": "summit",
    "lowest_point": "basin",
    "time_zone": "time_zone",
    "water_body": "water",
    "city_time_zone": "time_zone",
    "city_water_body": "water",
}

GENDER_LABELS: tuple[str, ...] = ("female", "male")
YEAR_RANGE: tuple[int, int] = (1800, 2020)

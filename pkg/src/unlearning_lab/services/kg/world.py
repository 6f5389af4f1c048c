from __future__ import annotations

import logging
import math

import numpy as np
from django.conf import settings

from unlearning_lab.exceptions import ConfigurationError
from unlearning_lab.schemas import WorldConfig
from unlearning_lab.services.bench.templates import template_words
from unlearning_lab.services.kg.catalog import (
    ALL_RELATIONS,
    GENDER_LABELS,
    PATTERNS,
    RELATIONS_BY_ID,
    RETAIN_POOLS,
    RETAIN_VALUE_KIND,
    TYPE_SUFFIXES,
    VALUE_KINDS,
    YEAR_RANGE,
)
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import ENTITY_TYPES, Entity, EntityType, Triple

logger = logging.getLogger(__name__)

ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
VOWELS = ("a", "e", "i", "o", "u")
CAPITAL_PATTERNS = frozenset({"C", "D", "E", "I", "J", "S", "V"})

# Entity types each pattern needs in its background pools, besides the fresh head.
PATTERN_REQUIREMENTS: dict[str, tuple[EntityType, ...]] = {
    "A": ("City", "Country"),
    "B": ("Person", "Country"),
    "C": ("City", "Country"),
    "D": ("Person", "Country"),
    "E": ("Person", "Country"),
    "F": ("Country", "Language"),
    "G": ("City", "Country", "Language"),
    "H": ("Person", "Country"),
    "I": ("Country",),
    "J": ("Country",),
    "K": ("Country", "Language"),
    "L": ("Person", "University", "Country"),
    "S": ("Person", "Country"),
    "T": ("Person", "Country", "Language"),
    "U": ("University", "Country"),
    "V": ("University", "Country"),
}


class LabelSampler:
    """Seeded syllable words; every word is used by at most one label."""

    def __init__(self, rng: np.random.Generator, reserved: set[str]) -> None:
        self._rng = rng
        self._used = {word.casefold() for word in reserved}

    def word(self) -> str:
        while True:
            syllables = int(self._rng.integers(2, 4))
            parts = [
                ONSETS[int(self._rng.integers(len(ONSETS)))]
                + VOWELS[int(self._rng.integers(len(VOWELS)))]
                for _ in range(syllables)
            ]
            if self._rng.random() < 0.2:
                parts.append("n")
            word = "".join(parts)
            if word not in self._used:
                self._used.add(word)
                return word

    def label(self, entity_type: EntityType) -> str:
        suffixes = TYPE_SUFFIXES[entity_type]
        if not suffixes:
            return f"{self.word()} {self.word()}"
        words = [self.word() for _ in range(int(self._rng.integers(1, 3)))]
        words.append(suffixes[int(self._rng.integers(len(suffixes)))])
        return " ".join(words)

    def value_label(self, kind: str) -> str:
        suffixes = VALUE_KINDS[kind]
        return f"{self.word()} {suffixes[int(self._rng.integers(len(suffixes)))]}"


class _Pool:
    def __init__(self, ids: list[str], rng: np.random.Generator) -> None:
        self._order = [ids[index] for index in rng.permutation(len(ids))]
        self._uses = dict.fromkeys(ids, 0)

    def __len__(self) -> int:
        return len(self._order)

    def pick(self) -> str:
        chosen = min(self._order, key=self._uses.__getitem__)
        self._uses[chosen] += 1
        return chosen


class _WorldBuilder:
    def __init__(self, config: WorldConfig) -> None:
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.sampler = LabelSampler(self.rng, _reserved_words())
        self.entities: list[Entity] = []
        self.by_type: dict[EntityType, list[str]] = {t: [] for t in ENTITY_TYPES}
        self.triples: list[Triple] = []
        self.values: dict[str, list[str]] = {}
        self._value_labels: set[str] = set()

    def new_entity(self, entity_type: EntityType, label: str | None = None) -> str:
        entity_id = f"E{len(self.entities):05d}"
        self.entities.append(
            Entity(
                id=entity_id,
                label=label or self.sampler.label(entity_type),
                entity_type=entity_type,
            )
        )
        self.by_type[entity_type].append(entity_id)
        return entity_id

    def add(self, head: str, relation: str, tail: str) -> None:
        self.triples.append(Triple(head, relation, tail))

    def build(self) -> KnowledgeGraph:
        for entity_type in ENTITY_TYPES:
            for _ in range(self.config.count(entity_type)):
                self.new_entity(entity_type)
        self._assign_profiles()
        self._instantiate_patterns()
        self._assign_retain_properties()
        self._assign_commonsense()
        self._drop_unused_values()
        logger.info(
            "generated world with %d entities and %d triples (seed %d)",
            len(self.entities),
            len(self.triples),
            self.config.seed,
        )
        return KnowledgeGraph(self.entities, ALL_RELATIONS, self.triples)

    def _assign_profiles(self) -> None:
        countries = list(self.by_type["Country"])
        cities = list(self.by_type["City"])
        languages = self.by_type["Language"]
        universities = self.by_type["University"]
        self.country_pool = _Pool(countries, self.rng)
        self.city_pool = _Pool(cities, self.rng)
        self.language_pool = _Pool(languages, self.rng)
        self.university_pool = _Pool(universities, self.rng)
        self.person_pool = _Pool(list(self.by_type["Person"]), self.rng)

        remaining = cities
        if countries and len(cities) >= len(countries):
            shuffled = [cities[index] for index in self.rng.permutation(len(cities))]
            for country, city in zip(countries, shuffled, strict=False):
                self.add(country, "capital_of", city)
                self.add(city, "city_country", country)
            remaining = sorted(shuffled[len(countries) :])
        if countries:
            for city in remaining:
                self.add(city, "city_country", self.country_pool.pick())
            for university in universities:
                self.add(university, "university_country", self.country_pool.pick())
            for film in self.by_type["Film"]:
                self.add(film, "origin_country", self.country_pool.pick())
        if languages:
            for country in countries:
                self.add(country, "official_language", self.language_pool.pick())
        if cities:
            for organization in self.by_type["Organization"]:
                self.add(organization, "hq_location", self.city_pool.pick())
        for person in self.by_type["Person"]:
            if countries:
                self.add(person, "citizenship", self.country_pool.pick())
            if universities:
                self.add(person, "educated_at", self.university_pool.pick())
            if languages:
                self.add(person, "native_language", self.language_pool.pick())

    def _instantiate_patterns(self) -> None:
        for pattern_id, quota in sorted(self.config.pattern_quotas.items()):
            pattern = PATTERNS[pattern_id]
            for _ in range(quota):
                if pattern_id == "F":
                    country = self.country_pool.pick()
                    person = self.new_entity("Person")
                    self.add(person, "citizenship", country)
                    self.add(person, "native_language", self.language_pool.pick())
                    continue
                head = self.new_entity(pattern.head_type)
                first = pattern.steps[0].relation
                self.add(head, first, self._pick_for(first))

    def _pick_for(self, relation: str) -> str:
        range_type = RELATIONS_BY_ID[relation].range_type
        pool = {
            "Person": self.person_pool,
            "Country": self.country_pool,
            "City": self.city_pool,
            "University": self.university_pool,
        }[range_type]
        return pool.pick()

    def _assign_retain_properties(self) -> None:
        for entity_type, quota in sorted(self.config.retain_quotas.items()):
            if quota == 0:
                continue
            subjects = list(self.by_type[entity_type])
            for subject in subjects:
                available = [
                    relation
                    for relation in RETAIN_POOLS.get(entity_type, ())
                    if self._candidates(relation, subject)
                ]
                size = min(quota, len(available))
                chosen = self.rng.choice(len(available), size=size, replace=False)
                for index in sorted(int(i) for i in chosen):
                    relation = available[index]
                    candidates = self._candidates(relation, subject)
                    tail = candidates[int(self.rng.integers(len(candidates)))]
                    self.add(subject, relation, tail)

    def _candidates(self, relation: str, subject: str) -> list[str]:
        range_type = RELATIONS_BY_ID[relation].range_type
        kind = RETAIN_VALUE_KIND.get(relation)
        if kind is not None:
            return self._value_pool(kind)
        return [entity_id for entity_id in self.by_type[range_type] if entity_id != subject]

    def _value_pool(self, kind: str) -> list[str]:
        if kind in self.values:
            return self.values[kind]
        if kind == "gender":
            labels = list(GENDER_LABELS)
        else:
            size = max(2, math.ceil(self.config.retain_value_ratio * self._subjects_using(kind)))
            if kind == "year":
                low, high = YEAR_RANGE
                size = min(size, high - low + 1)
                years = sorted(int(y) for y in self.rng.choice(high - low + 1, size, replace=False))
                labels = [f"year {low + year}" for year in years]
            else:
                labels = [self.sampler.value_label(kind) for _ in range(size)]
        self.values[kind] = [self.new_entity("Concept", label) for label in labels]
        return self.values[kind]

    def _subjects_using(self, kind: str) -> int:
        total = 0
        for entity_type, quota in self.config.retain_quotas.items():
            if quota == 0:
                continue
            pool = RETAIN_POOLS.get(entity_type, ())
            if any(RETAIN_VALUE_KIND.get(relation) == kind for relation in pool):
                total += len(self.by_type[entity_type])
        return total

    def _assign_commonsense(self) -> None:
        taken = self._all_values()
        concepts = [entity_id for entity_id in self.by_type["Concept"] if entity_id not in taken]
        concept_pool = _Pool(concepts, self.rng)
        for relation, quota in sorted(self.config.commonsense_quotas.items()):
            for _ in range(quota):
                head = concept_pool.pick()
                others = [entity_id for entity_id in concepts if entity_id != head]
                n_tails = min(int(self.rng.integers(1, 4)), len(others))
                picks = self.rng.choice(len(others), n_tails, replace=False)
                for index in sorted(int(i) for i in picks):
                    self.add(head, relation, others[index])

    def _all_values(self) -> set[str]:
        return {entity_id for ids in self.values.values() for entity_id in ids}

    def _drop_unused_values(self) -> None:
        # value pools are sized for every subject that could draw from them
        used = {t.head for t in self.triples} | {t.tail for t in self.triples}
        unused = self._all_values() - used
        self.entities = [entity for entity in self.entities if entity.id not in unused]
        for kind, ids in self.values.items():
            self.values[kind] = [entity_id for entity_id in ids if entity_id not in unused]
        logger.debug("dropped %d unused value entities", len(unused))


def _reserved_words() -> set[str]:
    words = set(template_words())
    for suffixes in TYPE_SUFFIXES.values():
        words.update(suffixes)
    for suffixes in VALUE_KINDS.values():
        words.update(suffixes)
    words.update(GENDER_LABELS)
    words.add("year")
    for text in (settings.LAB_REFUSAL_TEXT, settings.LAB_ICU_INSTRUCTION):
        words.update(text.casefold().replace(".", " ").split())
    return words


def entity_totals(config: WorldConfig) -> dict[EntityType, int]:
    """Entity counts per type after fresh pattern heads are added."""
    totals: dict[EntityType, int] = {t: config.count(t) for t in ENTITY_TYPES}
    for pattern_id, quota in config.pattern_quotas.items():
        head_type: EntityType = "Person" if pattern_id == "F" else PATTERNS[pattern_id].head_type
        totals[head_type] += quota
    return totals


def validate_world_config(config: WorldConfig) -> None:
    countries = config.count("Country")
    for pattern_id, quota in sorted(config.pattern_quotas.items()):
        if quota == 0:
            continue
        for entity_type in PATTERN_REQUIREMENTS[pattern_id]:
            if config.count(entity_type) < 1:
                raise ConfigurationError(
                    f"pattern {pattern_id} quota {quota} requires at least one {entity_type}"
                )
        if pattern_id in CAPITAL_PATTERNS and config.count("City") < countries:
            raise ConfigurationError(
                f"pattern {pattern_id} quota {quota} requires a capital for every country: "
                f"{config.count('City')} cities < {countries} countries"
            )

    totals = entity_totals(config)
    for entity_type, quota in sorted(config.retain_quotas.items()):
        if quota == 0:
            continue
        available = 0
        for relation in RETAIN_POOLS.get(entity_type, ()):
            range_type = RELATIONS_BY_ID[relation].range_type
            if relation in RETAIN_VALUE_KIND:
                available += 1
            elif totals[range_type] > (1 if range_type == entity_type else 0):
                available += 1
        if quota > available:
            raise ConfigurationError(
                f"retain quota {quota} for {entity_type} exceeds the {available} "
                "available properties"
            )

    for relation, quota in sorted(config.commonsense_quotas.items()):
        if relation not in RELATIONS_BY_ID or RELATIONS_BY_ID[relation].domain_type != "Concept":
            raise ConfigurationError(f"commonsense quota names unknown relation {relation!r}")
        if quota and config.count("Concept") < 2:
            raise ConfigurationError(
                f"commonsense quota {relation}={quota} requires at least two Concept entities"
            )


def generate_world(config: WorldConfig) -> KnowledgeGraph:
    validate_world_config(config)
    return _WorldBuilder(config).build()

"""Deterministic probe and statement templates, keyed by relation id."""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cache

from unlearning_lab.exceptions import ProbeGenerationError
from unlearning_lab.services.types import TemplateFamily

BLANK = "[BLANK]"
_PLACEHOLDER = re.compile(r"\{[a-z]+\}|\[[A-Z]+\]")
_WORD = re.compile(r"\w+")

# Leading inverse and multi-hop templates phrase evaluation probes; the rest may be rehearsed.
EVAL_INVERSE_TEMPLATES = 1
EVAL_MULTI_HOP_TEMPLATES = 2


@dataclass(slots=True, frozen=True)
class RelationTemplates:
    relation: str
    noun: str
    qa: tuple[str, ...]
    fb: tuple[str, ...]
    statements: tuple[str, ...]
    inverse_qa: tuple[str, ...]
    inverse_fb: tuple[str, ...]

    def family(self, family: TemplateFamily) -> tuple[str, ...]:
        return self.qa if family == "QA" else self.fb

    def inverse(self, family: TemplateFamily) -> tuple[str, ...]:
        return self.inverse_qa if family == "QA" else self.inverse_fb

    def inverse_rehearsal(self, family: TemplateFamily) -> tuple[str, ...]:
        return self.inverse(family)[EVAL_INVERSE_TEMPLATES:]


MULTI_HOP_QA: tuple[str, ...] = (
    "What is the {path} of {head}?",
    "Name the {path} of {head}.",
    "Tell me the {path} of {head}.",
)
MULTI_HOP_FB: tuple[str, ...] = (
    "The {path} of {head} is [BLANK]",
    "For {head}, the {path} is [BLANK]",
    "Following the links from {head}, the {path} is [BLANK]",
)


def _generic(relation: str, noun: str) -> RelationTemplates:
    return RelationTemplates(
        relation=relation,
        noun=noun,
        qa=(
            f"What is the {noun} of {{head}}?",
            f"Which {noun} does {{head}} have?",
            f"Can you name the {noun} of {{head}}?",
            f"Tell me the {noun} of {{head}}.",
        ),
        fb=(
            f"The {noun} of {{head}} is [BLANK]",
            f"{{head}} has the {noun} [BLANK]",
            f"As for {{head}}, the {noun} is [BLANK]",
            f"Regarding {{head}}, its {noun} is [BLANK]",
        ),
        statements=(
            f"The {noun} of {{head}} is {{tail}}.",
            f"{{head}} has the {noun} {{tail}}.",
            f"{{tail}} is the {noun} of {{head}}.",
            f"Regarding {{head}}, its {noun} is {{tail}}.",
        ),
        inverse_qa=(
            f"Which entity has {{tail}} as its {noun}?",
            f"Whose {noun} is {{tail}}?",
        ),
        inverse_fb=(
            f"{{tail}} is the {noun} of [BLANK]",
            f"The entity whose {noun} is {{tail}} is [BLANK]",
        ),
    )


def _core(
    relation: str,
    noun: str,
    *,
    qa: tuple[str, ...],
    fb: tuple[str, ...],
    statements: tuple[str, ...],
    inverse_qa: tuple[str, ...],
    inverse_fb: tuple[str, ...],
) -> RelationTemplates:
    return RelationTemplates(relation, noun, qa, fb, statements, inverse_qa, inverse_fb)


_CORE_TEMPLATES: tuple[RelationTemplates, ...] = (
    _core(
        "director",
        "director",
        qa=(
            "Who directed {head}?",
            "Who is the director of {head}?",
            "Which person directed the film {head}?",
            "Who was the director behind {head}?",
        ),
        fb=(
            "{head} was directed by [BLANK]",
            "The director of {head} is [BLANK]",
            "The film {head} was made by the director [BLANK]",
            "Directing {head} was the work of [BLANK]",
        ),
        statements=(
            "{head} was directed by {tail}.",
            "The director of {head} is {tail}.",
            "{tail} directed the film {head}.",
            "{tail} is the director of {head}.",
        ),
        inverse_qa=("Which film was directed by {tail}?", "What film did {tail} direct?"),
        inverse_fb=("{tail} directed the film [BLANK]", "The film directed by {tail} is [BLANK]"),
    ),
    _core(
        "producer",
        "producer",
        qa=(
            "Who produced {head}?",
            "Who is the producer of {head}?",
            "Which person produced the film {head}?",
            "Who was the producer behind {head}?",
        ),
        fb=(
            "{head} was produced by [BLANK]",
            "The producer of {head} is [BLANK]",
            "The film {head} was financed by the producer [BLANK]",
            "Producing {head} was the work of [BLANK]",
        ),
        statements=(
            "{head} was produced by {tail}.",
            "The producer of {head} is {tail}.",
            "{tail} produced the film {head}.",
            "{tail} is the producer of {head}.",
        ),
        inverse_qa=("Which film was produced by {tail}?", "What film did {tail} produce?"),
        inverse_fb=("{tail} produced the film [BLANK]", "The film produced by {tail} is [BLANK]"),
    ),
    _core(
        "performer",
        "performer",
        qa=(
            "Who performed {head}?",
            "Who is the performer of {head}?",
            "Which artist performed the work {head}?",
            "Who was the performer behind {head}?",
        ),
        fb=(
            "{head} was performed by [BLANK]",
            "The performer of {head} is [BLANK]",
            "The work {head} was performed by the artist [BLANK]",
            "Performing {head} was the work of [BLANK]",
        ),
        statements=(
            "{head} was performed by {tail}.",
            "The performer of {head} is {tail}.",
            "{tail} performed the work {head}.",
            "{tail} is the performer of {head}.",
        ),
        inverse_qa=("Which work was performed by {tail}?", "What work did {tail} perform?"),
        inverse_fb=("{tail} performed the work [BLANK]", "The work performed by {tail} is [BLANK]"),
    ),
    _core(
        "citizenship",
        "country of citizenship",
        qa=(
            "Which country is {head} a citizen of?",
            "What is the country of citizenship of {head}?",
            "Of which country does {head} hold citizenship?",
            "What nationality does {head} hold?",
        ),
        fb=(
            "{head} is a citizen of [BLANK]",
            "The country of citizenship of {head} is [BLANK]",
            "{head} holds citizenship of [BLANK]",
            "By nationality, {head} belongs to [BLANK]",
        ),
        statements=(
            "{head} is a citizen of {tail}.",
            "The country of citizenship of {head} is {tail}.",
            "{head} holds citizenship of {tail}.",
            "By nationality, {head} belongs to {tail}.",
        ),
        inverse_qa=("Who is a citizen of {tail}?", "Which person holds citizenship of {tail}?"),
        inverse_fb=("A citizen of {tail} is [BLANK]", "Citizenship of {tail} is held by [BLANK]"),
    ),
    _core(
        "capital_of",
        "capital",
        qa=(
            "What is the capital of {head}?",
            "Which city is the capital of {head}?",
            "Where is the seat of government of {head}?",
            "Name the capital city of {head}.",
        ),
        fb=(
            "The capital of {head} is [BLANK]",
            "{head} has its capital in [BLANK]",
            "The seat of government of {head} is [BLANK]",
            "The capital city of {head} is called [BLANK]",
        ),
        statements=(
            "The capital of {head} is {tail}.",
            "{head} has its capital in {tail}.",
            "{tail} is the capital of {head}.",
            "The seat of government of {head} is {tail}.",
        ),
        inverse_qa=(
            "Which country has {tail} as its capital?",
            "Of which country is {tail} the capital?",
        ),
        inverse_fb=(
            "{tail} is the capital of [BLANK]",
            "The country governed from {tail} is [BLANK]",
        ),
    ),
    _core(
        "hq_location",
        "headquarters city",
        qa=(
            "Where is {head} headquartered?",
            "In which city is the headquarters of {head}?",
            "What city hosts the headquarters of {head}?",
            "Where are the main offices of {head}?",
        ),
        fb=(
            "{head} is headquartered in [BLANK]",
            "The headquarters of {head} are in [BLANK]",
            "The main offices of {head} are located in [BLANK]",
            "The city hosting the headquarters of {head} is [BLANK]",
        ),
        statements=(
            "{head} is headquartered in {tail}.",
            "The headquarters of {head} are in {tail}.",
            "{tail} hosts the headquarters of {head}.",
            "The main offices of {head} are located in {tail}.",
        ),
        inverse_qa=(
            "Which organization is headquartered in {tail}?",
            "What organization has its headquarters in {tail}?",
        ),
        inverse_fb=(
            "The organization headquartered in {tail} is [BLANK]",
            "{tail} hosts the headquarters of [BLANK]",
        ),
    ),
    _core(
        "city_country",
        "country",
        qa=(
            "In which country is {head} located?",
            "Which country does the city {head} belong to?",
            "What country is {head} in?",
            "Where is the city {head} situated?",
        ),
        fb=(
            "{head} is located in [BLANK]",
            "The city {head} belongs to [BLANK]",
            "The country of {head} is [BLANK]",
            "The city {head} is situated in [BLANK]",
        ),
        statements=(
            "{head} is located in {tail}.",
            "The city {head} belongs to {tail}.",
            "The country of {head} is {tail}.",
            "{tail} contains the city {head}.",
        ),
        inverse_qa=("Which city is located in {tail}?", "Name a city in {tail}."),
        inverse_fb=("A city located in {tail} is [BLANK]", "{tail} contains the city [BLANK]"),
    ),
    _core(
        "university_country",
        "country",
        qa=(
            "In which country is the university {head}?",
            "Which country hosts {head}?",
            "What country is the university {head} located in?",
            "Where is the university {head} situated?",
        ),
        fb=(
            "The university {head} is located in [BLANK]",
            "{head} is a university in [BLANK]",
            "The country hosting {head} is [BLANK]",
            "The university {head} is situated in [BLANK]",
        ),
        statements=(
            "The university {head} is located in {tail}.",
            "{head} is a university in {tail}.",
            "The country hosting {head} is {tail}.",
            "{tail} hosts the university {head}.",
        ),
        inverse_qa=("Which university is located in {tail}?", "Name a university in {tail}."),
        inverse_fb=(
            "A university located in {tail} is [BLANK]",
            "{tail} hosts the university [BLANK]",
        ),
    ),
    _core(
        "origin_country",
        "country of origin",
        qa=(
            "What is the country of origin of {head}?",
            "In which country was {head} produced?",
            "Which country does the film {head} come from?",
            "Where does the film {head} originate?",
        ),
        fb=(
            "The country of origin of {head} is [BLANK]",
            "{head} was produced in [BLANK]",
            "The film {head} comes from [BLANK]",
            "The film {head} originates from [BLANK]",
        ),
        statements=(
            "The country of origin of {head} is {tail}.",
            "{head} was produced in {tail}.",
            "The film {head} comes from {tail}.",
            "{tail} is the country of origin of {head}.",
        ),
        inverse_qa=("Which film comes from {tail}?", "Name a film produced in {tail}."),
        inverse_fb=("A film from {tail} is [BLANK]", "{tail} is the country of origin of [BLANK]"),
    ),
    _core(
        "educated_at",
        "alma mater",
        qa=(
            "Where was {head} educated?",
            "Which university did {head} attend?",
            "What is the alma mater of {head}?",
            "At which university did {head} study?",
        ),
        fb=(
            "{head} was educated at [BLANK]",
            "The alma mater of {head} is [BLANK]",
            "{head} studied at [BLANK]",
            "The university attended by {head} is [BLANK]",
        ),
        statements=(
            "{head} was educated at {tail}.",
            "The alma mater of {head} is {tail}.",
            "{head} studied at {tail}.",
            "{tail} is the university attended by {head}.",
        ),
        inverse_qa=("Who was educated at {tail}?", "Which person studied at {tail}?"),
        inverse_fb=("A graduate of {tail} is [BLANK]", "{tail} educated [BLANK]"),
    ),
    _core(
        "official_language",
        "official language",
        qa=(
            "What is the official language of {head}?",
            "Which language is official in {head}?",
            "What language do the institutions of {head} use?",
            "Which language has official status in {head}?",
        ),
        fb=(
            "The official language of {head} is [BLANK]",
            "In {head}, the official language is [BLANK]",
            "The institutions of {head} use [BLANK]",
            "The language with official status in {head} is [BLANK]",
        ),
        statements=(
            "The official language of {head} is {tail}.",
            "In {head}, the official language is {tail}.",
            "{tail} is the official language of {head}.",
            "The institutions of {head} use {tail}.",
        ),
        inverse_qa=(
            "Which country has {tail} as its official language?",
            "Where is {tail} the official language?",
        ),
        inverse_fb=(
            "{tail} is the official language of [BLANK]",
            "A country using {tail} officially is [BLANK]",
        ),
    ),
    _core(
        "native_language",
        "native language",
        qa=(
            "What is the native language of {head}?",
            "Which language did {head} speak from birth?",
            "What is the mother tongue of {head}?",
            "Which language is native to {head}?",
        ),
        fb=(
            "The native language of {head} is [BLANK]",
            "From birth, {head} spoke [BLANK]",
            "The mother tongue of {head} is [BLANK]",
            "The language native to {head} is [BLANK]",
        ),
        statements=(
            "The native language of {head} is {tail}.",
            "From birth, {head} spoke {tail}.",
            "The mother tongue of {head} is {tail}.",
            "{tail} is the native language of {head}.",
        ),
        inverse_qa=("Whose native language is {tail}?", "Who speaks {tail} from birth?"),
        inverse_fb=(
            "A native speaker of {tail} is [BLANK]",
            "{tail} is the native language of [BLANK]",
        ),
    ),
)

_GENERIC_NOUNS: dict[str, str] = {
    "occupation": "occupation",
    "award": "award",
    "employer": "employer",
    "notable_work": "notable work",
    "birth_place": "birth place",
    "birth_year": "birth year",
    "gender": "gender",
    "father": "father",
    "mother": "mother",
    "industry": "industry",
    "founded_by": "founder",
    "inception": "founding year",
    "org_named_after": "namesake",
    "legal_form": "legal form",
    "film_language": "original language",
    "publication_year": "publication year",
    "genre": "genre",
    "composer": "composer",
    "based_on": "source work",
    "cinematographer": "cinematographer",
    "broadcaster": "original broadcaster",
    "present_in_work": "parent work",
    "work_genre": "genre",
    "release_year": "release year",
    "continent": "continent",
    "head_of_state_office": "head of state office",
    "highest_point": "highest point",
    "lowest_point": "lowest point",
    "time_zone": "time zone",
    "water_body": "neighboring body of water",
    "central_bank": "central bank",
    "city_time_zone": "time zone",
    "city_water_body": "nearby body of water",
    "city_named_after": "namesake",
    "is_a": "category",
    "part_of": "whole",
    "used_for": "purpose",
    "capable_of": "ability",
    "at_location": "typical location",
}


class TemplateBank:
    def __init__(self, templates: Iterable[RelationTemplates]) -> None:
        self._templates = {template.relation: template for template in templates}

    def __contains__(self, relation: object) -> bool:
        return relation in self._templates

    def relations(self) -> tuple[str, ...]:
        return tuple(sorted(self._templates))

    def get(self, relation: str) -> RelationTemplates:
        try:
            return self._templates[relation]
        except KeyError as exc:
            raise ProbeGenerationError(
                f"template bank has no templates for relation {relation!r}"
            ) from exc

    def path_phrase(self, relations: Sequence[str]) -> str:
        return " of the ".join(self.get(relation).noun for relation in reversed(relations))

    def multi_hop(self, family: TemplateFamily) -> tuple[str, ...]:
        return MULTI_HOP_QA if family == "QA" else MULTI_HOP_FB

    def multi_hop_rehearsal(self, family: TemplateFamily) -> tuple[str, ...]:
        return self.multi_hop(family)[EVAL_MULTI_HOP_TEMPLATES:]

    def render_multi_hop(self, template: str, relations: Sequence[str], head: str) -> str:
        return template.format(path=self.path_phrase(relations), head=head)

    def texts(self) -> list[str]:
        texts: list[str] = list(MULTI_HOP_QA + MULTI_HOP_FB)
        for template in self._templates.values():
            texts.append(template.noun)
            texts.extend(template.qa + template.fb + template.statements)
            texts.extend(template.inverse_qa + template.inverse_fb)
        return texts


def render(template: str, *, head: str | None = None, tail: str | None = None) -> str:
    return template.format(head=head, tail=tail)


def default_template_bank(nouns: Mapping[str, str] | None = None) -> TemplateBank:
    generic = [_generic(relation, noun) for relation, noun in (nouns or _GENERIC_NOUNS).items()]
    return TemplateBank([*_CORE_TEMPLATES, *generic])


@cache
def template_words() -> frozenset[str]:
    words: set[str] = set()
    for text in default_template_bank().texts():
        words.update(word.casefold() for word in _WORD.findall(_PLACEHOLDER.sub(" ", text)))
    return frozenset(words)

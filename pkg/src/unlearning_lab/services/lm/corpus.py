from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Literal

from django.conf import settings

from unlearning_lab.exceptions import PreconditionError
from unlearning_lab.services.bench.templates import TemplateBank, render
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.lm.sequences import TrainingExample, qa_example, statement_example
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.types import TEMPLATE_FAMILIES, BenchmarkCase
from unlearning_lab.services.unlearn.icu import icu_wrap

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class CorpusEntry:
    kind: Literal["statement", "qa"]
    prompt: str
    completion: str

    def texts(self) -> tuple[str, ...]:
        return (self.completion,) if self.kind == "statement" else (self.prompt, self.completion)


def build_corpus(
    graph: KnowledgeGraph,
    bank: TemplateBank,
    cases: Sequence[BenchmarkCase] = (),
    *,
    rehearse_compositions: bool = False,
    include_icu_demonstrations: bool = True,
    refusal: str | None = None,
    instruction: str | None = None,
) -> list[CorpusEntry]:
    """Render every fact as its statements plus one QA and one fill-in-the-blank pair.

    Only the first template of each family is trained, so paraphrase probes stay unseen.
    ``rehearse_compositions`` adds inverse questions (single-answer inverses only) and the
    case chains' multi-hop questions, phrased with the templates evaluation never uses.
    ``include_icu_demonstrations`` adds instruction-wrapped commonsense questions answered
    with the refusal so the in-context baseline has behaviour to trigger.
    """
    refusal = settings.LAB_REFUSAL_TEXT if refusal is None else refusal
    entries: list[CorpusEntry] = []
    for triple in graph.triples:
        templates = bank.get(triple.relation)
        head = graph.label(triple.head)
        tail = graph.label(triple.tail)
        entries.extend(
            CorpusEntry("statement", "", render(statement, head=head, tail=tail))
            for statement in templates.statements
        )
        if not graph.relation(triple.relation).functional:
            continue
        for family in TEMPLATE_FAMILIES:
            entries.append(CorpusEntry("qa", render(templates.family(family)[0], head=head), tail))
            if rehearse_compositions and len(graph.heads(triple.relation, triple.tail)) == 1:
                entries.extend(
                    CorpusEntry("qa", render(question, tail=tail), head)
                    for question in templates.inverse_rehearsal(family)
                )

    if rehearse_compositions:
        for case in cases:
            head = graph.label(case.target.head)
            for chain in case.chains:
                relations = tuple(triple.relation for triple in chain.triples)
                answer = graph.label(chain.triples[-1].tail)
                for family in TEMPLATE_FAMILIES:
                    entries.extend(
                        CorpusEntry("qa", bank.render_multi_hop(template, relations, head), answer)
                        for template in bank.multi_hop_rehearsal(family)
                    )

    if include_icu_demonstrations:
        for triple in graph.triples:
            if graph.relation(triple.relation).functional:
                continue
            question = render(bank.get(triple.relation).qa[0], head=graph.label(triple.head))
            entries.append(CorpusEntry("qa", icu_wrap(question, instruction), refusal))

    entries = list(dict.fromkeys(entries))
    logger.info("rendered pretraining corpus with %d entries", len(entries))
    return entries


def build_tokenizer(
    graph: KnowledgeGraph,
    corpus: Iterable[CorpusEntry],
    cases: Sequence[BenchmarkCase] = (),
    *,
    refusal: str | None = None,
    instruction: str | None = None,
) -> Tokenizer:
    texts: list[str] = [entity.label for entity in graph.entities.values()]
    for entry in corpus:
        texts.extend(entry.texts())
    for case in cases:
        for probe in case.probes:
            texts.extend((probe.question, probe.answer))
    texts.append(settings.LAB_REFUSAL_TEXT if refusal is None else refusal)
    texts.append(settings.LAB_ICU_INSTRUCTION if instruction is None else instruction)
    return Tokenizer.build(texts)


def encode_corpus(tokenizer: Tokenizer, corpus: Sequence[CorpusEntry]) -> list[TrainingExample]:
    if not corpus:
        raise PreconditionError("pretraining corpus is empty")
    return [
        statement_example(tokenizer, entry.completion)
        if entry.kind == "statement"
        else qa_example(tokenizer, entry.prompt, entry.completion)
        for entry in corpus
    ]

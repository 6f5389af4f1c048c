from __future__ import annotations

import logging
import re
from collections.abc import Callable, Iterable

import numpy as np
from django.conf import settings

from unlearning_lab.exceptions import ProbeGenerationError, ProbeScoringError
from unlearning_lab.services.bench.chains import chain_answers
from unlearning_lab.services.bench.templates import (
    EVAL_INVERSE_TEMPLATES,
    EVAL_MULTI_HOP_TEMPLATES,
    TemplateBank,
    render,
)
from unlearning_lab.services.evaluation.rouge import rouge_l
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.types import (
    PROBE_HOPS,
    TEMPLATE_FAMILIES,
    BenchmarkCase,
    Chain,
    KnownFilterResult,
    Probe,
    ProbeType,
    Split,
    TemplateFamily,
    Triple,
    VerificationResult,
)

logger = logging.getLogger(__name__)

_WORD = re.compile(r"\w+")
MIN_PARAPHRASE_TEMPLATES = 3


def _tokens(text: str) -> list[str]:
    return [token.casefold() for token in _WORD.findall(text)]


def answer_leaks(question: str, answer: str) -> bool:
    needle = _tokens(answer)
    haystack = _tokens(question)
    if not needle:
        return False
    width = len(needle)
    return any(haystack[i : i + width] == needle for i in range(len(haystack) - width + 1))


def graph_answers(graph: KnowledgeGraph, probe: Probe) -> set[str]:
    chain = probe.chain or (probe.target,)
    if probe.probe_type == "inverse":
        return set(graph.heads(chain[0].relation, chain[0].tail))
    return chain_answers(graph, chain[0].head, tuple(triple.relation for triple in chain))


def verify_probe(probe: Probe, graph: KnowledgeGraph | None = None) -> VerificationResult:
    if not probe.answer.strip():
        return VerificationResult(False, "empty-answer")
    if PROBE_HOPS[probe.probe_type] != probe.hop:
        return VerificationResult(False, "hop-mismatch")
    if answer_leaks(probe.question, probe.answer):
        return VerificationResult(False, "answer-leak")
    if graph is not None and len(graph_answers(graph, probe)) > 1:
        return VerificationResult(False, "ambiguity")
    return VerificationResult(True, "ok")


def _split_for(probe_type: ProbeType, family: TemplateFamily) -> Split:
    if probe_type == "retain":
        return "retain_eval"
    if probe_type == "direct" and family == "QA":
        return "forget_train"
    return "forget_eval"


class _ProbeWriter:
    def __init__(self, graph: KnowledgeGraph, case: BenchmarkCase) -> None:
        self.graph = graph
        self.case = case
        self.counters: dict[tuple[TemplateFamily, ProbeType], int] = {}
        self.probes: list[Probe] = []

    def make(
        self,
        family: TemplateFamily,
        probe_type: ProbeType,
        question: str,
        answer: str,
        chain: tuple[Triple, ...],
    ) -> Probe:
        number = self.counters.get((family, probe_type), 0) + 1
        self.counters[(family, probe_type)] = number
        return Probe(
            case_id=self.case.case_id,
            probe_id=f"{self.case.case_id}-{family}-{probe_type}-{number}",
            probe_type=probe_type,
            template_family=family,
            hop=PROBE_HOPS[probe_type],
            question=question,
            answer=answer,
            target=self.case.target,
            split=_split_for(probe_type, family),
            chain=chain,
        )

    def add(self, probe: Probe) -> None:
        result = verify_probe(probe, self.graph)
        if not result.ok:
            raise ProbeGenerationError(f"{probe.probe_id} failed verification: {result.reason}")
        self.probes.append(probe)


def _multi_hop_question(
    bank: TemplateBank, family: TemplateFamily, index: int, chain: Chain, head: str
) -> str:
    templates = bank.multi_hop(family)[:EVAL_MULTI_HOP_TEMPLATES]
    relations = tuple(triple.relation for triple in chain.triples)
    return bank.render_multi_hop(templates[index % len(templates)], relations, head)


def generate_probes(
    graph: KnowledgeGraph, case: BenchmarkCase, bank: TemplateBank, seed: int
) -> list[Probe]:
    """Render 8 QA and 8 FB probes; the three-hop probe is omitted when none verifies."""
    rng = np.random.default_rng(seed)
    target = case.target
    head_label = graph.label(target.head)
    tail_label = graph.label(target.tail)
    templates = bank.get(target.relation)
    if not case.retain_facts:
        raise ProbeGenerationError(f"{case.case_id} has no retain facts")
    two_hop = [chain for chain in case.chains if chain.hops == 2]
    three_hop = [chain for chain in case.chains if chain.hops == 3]
    if not two_hop:
        raise ProbeGenerationError(f"{case.case_id} has no two-hop chain")
    retain_fact = case.retain_facts[int(rng.integers(len(case.retain_facts)))]
    retain_templates = bank.get(retain_fact.relation)

    writer = _ProbeWriter(graph, case)
    for family in TEMPLATE_FAMILIES:
        family_templates = templates.family(family)
        writer.add(
            writer.make(
                family,
                "direct",
                render(family_templates[0], head=head_label),
                tail_label,
                (target,),
            )
        )

        paraphrases = family_templates[1:]
        if len(paraphrases) < MIN_PARAPHRASE_TEMPLATES:
            raise ProbeGenerationError(
                f"relation {target.relation!r} has {len(paraphrases)} {family} paraphrase "
                f"templates, {MIN_PARAPHRASE_TEMPLATES} required"
            )
        for index in sorted(int(i) for i in rng.choice(len(paraphrases), 2, replace=False)):
            writer.add(
                writer.make(
                    family,
                    "paraphrase",
                    render(paraphrases[index], head=head_label),
                    tail_label,
                    (target,),
                )
            )

        inverse_templates = templates.inverse(family)[:EVAL_INVERSE_TEMPLATES]
        if not inverse_templates:
            raise ProbeGenerationError(f"relation {target.relation!r} has no inverse templates")
        writer.add(
            writer.make(
                family,
                "inverse",
                render(inverse_templates[0], tail=tail_label),
                head_label,
                (target,),
            )
        )

        order = [int(i) for i in rng.permutation(len(two_hop))]
        for slot in range(2):
            chain = two_hop[order[slot % len(order)]]
            writer.add(
                writer.make(
                    family,
                    "two_hop",
                    _multi_hop_question(bank, family, slot, chain, head_label),
                    graph.label(chain.triples[-1].tail),
                    chain.triples,
                )
            )

        for index in (int(i) for i in rng.permutation(len(three_hop))):
            chain = three_hop[index]
            probe = writer.make(
                family,
                "three_hop",
                _multi_hop_question(bank, family, 0, chain, head_label),
                graph.label(chain.triples[-1].tail),
                chain.triples,
            )
            if verify_probe(probe, graph).ok:
                writer.probes.append(probe)
                break
            writer.counters[(family, "three_hop")] -= 1

        writer.add(
            writer.make(
                family,
                "retain",
                render(retain_templates.family(family)[0], head=head_label),
                graph.label(retain_fact.tail),
                (retain_fact,),
            )
        )
    return writer.probes


def filter_known(
    probes: Iterable[Probe],
    scorer: Callable[[str], str],
    threshold: float | None = None,
) -> KnownFilterResult:
    """Keep probes the model already answers; a case is dropped when either direct probe fails."""
    threshold = settings.LAB_KNOWN_THRESHOLD if threshold is None else threshold
    probes = list(probes)
    known: dict[str, bool] = {}
    for probe in probes:
        try:
            output = scorer(probe.question)
        except Exception as exc:
            raise ProbeScoringError(str(exc), probe_id=probe.probe_id) from exc
        known[probe.probe_id] = rouge_l(output, probe.answer).recall >= threshold

    unusable = sorted(
        {
            probe.case_id
            for probe in probes
            if probe.probe_type == "direct" and not known[probe.probe_id]
        }
    )
    kept = tuple(p for p in probes if known[p.probe_id] and p.case_id not in unusable)
    dropped = tuple(p for p in probes if not known[p.probe_id] or p.case_id in unusable)
    logger.info(
        "known-probe filter kept %d of %d probes; %d case(s) unusable",
        len(kept),
        len(probes),
        len(unusable),
    )
    return KnownFilterResult(kept=kept, dropped=dropped, unusable_cases=tuple(unusable))

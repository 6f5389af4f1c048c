from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from unlearning_lab.exceptions import MetricInputError
from unlearning_lab.services.evaluation.rouge import rouge_l
from unlearning_lab.services.lm.sequences import answer_ids, answer_logprob
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import MetricsReport, Probe

REFUSAL_PATTERNS: tuple[str, ...] = (
    "i do not know",
    "i don't know",
    "i cannot answer",
    "i can't answer",
    "unable to answer",
    "no information",
)
_REFUSAL = re.compile("|".join(re.escape(p) for p in REFUSAL_PATTERNS), re.IGNORECASE)

UE_GROUPS: dict[str, tuple[str, ...]] = {
    "direct": ("direct",),
    "paraphrase": ("paraphrase",),
    "inverse": ("inverse",),
    "multi_hop": ("two_hop", "three_hop"),
}
NEIGHBORHOOD_TYPES = frozenset({"paraphrase", "inverse", "two_hop", "three_hop"})


@dataclass(slots=True, frozen=True)
class ProbeOutput:
    probe: Probe
    output: str


def recalls(outputs: Sequence[str], golds: Sequence[str]) -> list[float]:
    if len(outputs) != len(golds):
        raise MetricInputError(f"{len(outputs)} outputs for {len(golds)} gold answers")
    if not golds:
        raise MetricInputError("metric needs at least one output")
    return [rouge_l(output, gold).recall for output, gold in zip(outputs, golds, strict=True)]


def unlearning_efficacy(outputs: Sequence[str], golds: Sequence[str]) -> float:
    return 1.0 - float(np.mean(recalls(outputs, golds)))


def locality(outputs: Sequence[str], golds: Sequence[str]) -> float:
    return float(np.mean(recalls(outputs, golds)))


def kcs(outputs: Sequence[str], golds: Sequence[str]) -> float:
    return float(np.mean(recalls(outputs, golds)))


def delta_kcs(pre: float, post: float) -> float:
    return post - pre


def is_refusal(output: str) -> bool:
    return _REFUSAL.search(output) is not None


def refusal_rate(outputs: Sequence[str]) -> float:
    if not outputs:
        return 0.0
    return sum(1 for output in outputs if is_refusal(output)) / len(outputs)


def harmonic_mean(ue: float, loc: float) -> float:
    if ue + loc == 0:
        return 0.0
    return 2.0 * ue * loc / (ue + loc)


def answer_probability(
    model: TransformerLM, tokenizer: Tokenizer, question: str, answer: str
) -> float:
    """Per-token geometric mean probability of the gold answer."""
    length = len(answer_ids(tokenizer, answer))
    return math.exp(answer_logprob(model, tokenizer, question, answer) / length)


def _select(outputs: Iterable[ProbeOutput], types: Iterable[str]) -> list[ProbeOutput]:
    wanted = set(types)
    return [item for item in outputs if item.probe.probe_type in wanted]


def _texts(items: Sequence[ProbeOutput]) -> tuple[list[str], list[str]]:
    return [item.output for item in items], [item.probe.answer for item in items]


def metrics_report(
    method: str,
    template_family: str,
    post: Sequence[ProbeOutput],
    pre: Sequence[ProbeOutput],
) -> MetricsReport:
    """Score one method's generations for one template family (or "All")."""
    if not post:
        raise MetricInputError(f"no outputs to score for {method} / {template_family}")
    ue_by_type = {}
    for group, types in UE_GROUPS.items():
        items = _select(post, types)
        ue_by_type[group] = unlearning_efficacy(*_texts(items)) if items else math.nan
    retained = _select(post, ("retain",))
    loc = locality(*_texts(retained)) if retained else math.nan
    kcs_post = kcs(*_texts(_select(post, NEIGHBORHOOD_TYPES)))
    kcs_pre = kcs(*_texts(_select(pre, NEIGHBORHOOD_TYPES))) if pre else kcs_post
    forget_outputs = [item.output for item in post if item.probe.probe_type != "retain"]
    direct = ue_by_type["direct"]
    return MetricsReport(
        method=method,
        template_family=template_family,
        ue_by_type=ue_by_type,
        locality=loc,
        kcs_pre=kcs_pre,
        kcs_post=kcs_post,
        delta_kcs=delta_kcs(kcs_pre, kcs_post),
        refusal_rate=refusal_rate(forget_outputs),
        hmean=harmonic_mean(direct, loc) if not math.isnan(direct + loc) else math.nan,
    )

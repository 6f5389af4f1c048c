from __future__ import annotations

import logging
from collections.abc import Callable, Sequence

from unlearning_lab.services.evaluation.metrics import ProbeOutput, metrics_report
from unlearning_lab.services.evaluation.rouge import rouge_l
from unlearning_lab.services.lm.sequences import generate_answer
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import TEMPLATE_FAMILIES, MetricsReport, Probe

logger = logging.getLogger(__name__)

Wrap = Callable[[str], str]


def generate_outputs(
    model: TransformerLM,
    tokenizer: Tokenizer,
    probes: Sequence[Probe],
    max_answer_tokens: int,
    wrap: Wrap | None = None,
) -> list[ProbeOutput]:
    """Greedy answers for every probe; ``wrap`` rewrites the question first (ICU)."""
    outputs = []
    for probe in probes:
        question = wrap(probe.question) if wrap else probe.question
        outputs.append(
            ProbeOutput(probe, generate_answer(model, tokenizer, question, max_answer_tokens))
        )
    logger.debug("generated %d probe outputs", len(outputs))
    return outputs


def family_reports(
    method: str, post: Sequence[ProbeOutput], pre: Sequence[ProbeOutput]
) -> list[MetricsReport]:
    """One report per template family followed by the pooled "All" report."""
    reports = []
    for family in TEMPLATE_FAMILIES:
        post_family = [o for o in post if o.probe.template_family == family]
        if not post_family:
            continue
        pre_family = [o for o in pre if o.probe.template_family == family]
        reports.append(metrics_report(method, family, post_family, pre_family))
    reports.append(metrics_report(method, "All", post, pre))
    return reports


def direct_accuracy(
    model: TransformerLM,
    tokenizer: Tokenizer,
    probes: Sequence[Probe],
    max_answer_tokens: int,
    threshold: float,
) -> float:
    """Share of direct probes whose greedy answer recalls the gold answer at ``threshold``."""
    direct = [p for p in probes if p.probe_type == "direct"]
    if not direct:
        return 0.0
    outputs = generate_outputs(model, tokenizer, direct, max_answer_tokens)
    hits = sum(1 for o in outputs if rouge_l(o.output, o.probe.answer).recall >= threshold)
    return hits / len(direct)

"""In-context unlearning: an instruction prepended at inference time, no training."""

from __future__ import annotations

from django.conf import settings

from unlearning_lab.exceptions import IcuWrapError
from unlearning_lab.services.lm.tokenizer import SEP, Tokenizer


def icu_wrap(
    question: str, instruction: str | None = None, tokenizer: Tokenizer | None = None
) -> str:
    instruction = settings.LAB_ICU_INSTRUCTION if instruction is None else instruction
    if question.startswith(instruction) or SEP in question:
        raise IcuWrapError(f"question is already wrapped: {question!r}")
    wrapped = f"{instruction} {SEP} {question}"
    if tokenizer is not None:
        tokenizer.encode(wrapped)
    return wrapped


def is_wrapped(question: str, instruction: str | None = None) -> bool:
    instruction = settings.LAB_ICU_INSTRUCTION if instruction is None else instruction
    return question.startswith(f"{instruction} {SEP} ")

from __future__ import annotations

import re
from collections.abc import Sequence

import numpy as np

from unlearning_lab.services.types import RougeScore

_WORD = re.compile(r"\w+")


def rouge_tokens(text: str) -> list[str]:
    return [token.casefold() for token in _WORD.findall(text)]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i, token_a in enumerate(a, start=1):
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[len(a), len(b)])


def rouge_l(hypothesis: str, reference: str) -> RougeScore:
    """Token-level ROUGE-L on case-folded words; an empty side scores zero."""
    hyp = rouge_tokens(hypothesis)
    ref = rouge_tokens(reference)
    lcs = lcs_length(hyp, ref)
    recall = lcs / len(ref) if ref else 0.0
    precision = lcs / len(hyp) if hyp else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return RougeScore(precision=precision, recall=recall, f1=f1)

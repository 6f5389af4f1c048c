from __future__ import annotations

from functools import cache

import numpy as np
import pytest

from unlearning_lab.services.evaluation.rouge import lcs_length, rouge_l, rouge_tokens


def _recursive_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    @cache
    def best(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + best(i + 1, j + 1)
        return max(best(i + 1, j), best(i, j + 1))

    return best(0, 0)


def test_identical_answers_score_one() -> None:
    score = rouge_l("paris", "paris")

    assert (score.precision, score.recall, score.f1) == (1.0, 1.0, 1.0)


def test_longer_hypothesis_keeps_full_recall() -> None:
    score = rouge_l("the nobel peace prize", "nobel prize")

    assert score.recall == 1.0
    assert score.precision == 0.5
    assert score.f1 == pytest.approx(2 / 3)


def test_disjoint_and_empty_inputs_score_zero() -> None:
    assert rouge_l("Ana Lovo", "Dorava") == rouge_l("", "Dorava")
    assert rouge_l("Ana Lovo", "Dorava").recall == 0.0
    assert rouge_l("Dorava", "").recall == 0.0
    assert rouge_l("", "").f1 == 0.0


def test_tokens_are_case_folded_words() -> None:
    assert rouge_tokens("Ana LOVO, of Dorava.") == ["ana", "lovo", "of", "dorava"]
    assert rouge_l("ANA lovo", "Ana Lovo").recall == 1.0


def test_lcs_agrees_with_a_recursive_oracle() -> None:
    rng = np.random.default_rng(0)
    alphabet = np.array(["ana", "lovo", "dorava", "kesimo", "of", "the"])

    for _ in range(1000):
        a = tuple(rng.choice(alphabet, size=rng.integers(0, 9)).tolist())
        b = tuple(rng.choice(alphabet, size=rng.integers(0, 9)).tolist())
        expected = _recursive_lcs(a, b)

        assert lcs_length(a, b) == expected
        assert rouge_l(" ".join(a), " ".join(b)).recall == (expected / len(b) if b else 0.0)

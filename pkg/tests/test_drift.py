from __future__ import annotations

import math

import numpy as np
import pytest

from unlearning_lab.exceptions import MetricInputError
from unlearning_lab.schemas import ModelConfig
from unlearning_lab.services.evaluation.drift import (
    drift_report,
    forget_gradient,
    gradient_alignment,
    neighbor_gradients,
    representation_drift,
)
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import QAPair, Triple
from unlearning_lab.services.unlearn.neighbors import mine_neighbors

GOLD = QAPair("Who directed Tarin Vale?", "Ana Lovo")


def test_projection_removes_the_neighbor_direction() -> None:
    alignment = gradient_alignment(np.array([1.0, 1.0]), [np.array([1.0, 0.0])])

    assert alignment.residual_norm == pytest.approx(1.0)
    assert alignment.forget_norm == pytest.approx(math.sqrt(2))
    assert alignment.cosine == pytest.approx(1 / math.sqrt(2))


def test_orthogonal_gradients_keep_the_full_norm() -> None:
    alignment = gradient_alignment(
        np.array([0.0, 0.0, 3.0]), [np.array([1.0, 0.0, 0.0]), np.array([0.0, 2.0, 0.0])]
    )

    assert alignment.cosine == 0.0
    assert alignment.residual_norm == pytest.approx(3.0)


def test_dependent_neighbor_gradients_span_one_direction() -> None:
    alignment = gradient_alignment(
        np.array([1.0, 1.0]),
        [np.array([2.0, 0.0]), np.array([4.0, 0.0])],
        weights=[0.5, 0.5],
    )

    assert alignment.residual_norm == pytest.approx(1.0)


def test_no_neighbors_leaves_the_forget_gradient_untouched() -> None:
    alignment = gradient_alignment(np.array([3.0, 4.0]), [])

    assert (alignment.cosine, alignment.residual_norm, alignment.forget_norm) == (0.0, 5.0, 5.0)


def test_same_model_has_no_drift(tiny_model, tiny_tokenizer) -> None:
    questions = ["Who directed Tarin Vale ?", "Ana Lovo"]

    assert representation_drift(tiny_model, tiny_model, tiny_tokenizer, questions) == 0.0
    assert representation_drift(tiny_model, tiny_model, tiny_tokenizer, []) == 0.0


def test_changed_model_drifts(tiny_model, tiny_tokenizer) -> None:
    moved = TransformerLM(
        tiny_model.config, {k: v + 0.05 for k, v in tiny_model.params.items()}
    )

    drift = representation_drift(tiny_model, moved, tiny_tokenizer, ["Who directed Tarin Vale ?"])

    assert drift > 0.0


def test_drift_needs_matching_architectures(tiny_model, tiny_tokenizer) -> None:
    wider = TransformerLM(
        ModelConfig(
            d_model=32,
            n_layers=1,
            n_heads=2,
            d_ff=32,
            max_seq_len=24,
            vocab_size=len(tiny_tokenizer),
        )
    )
    with pytest.raises(MetricInputError):
        representation_drift(tiny_model, wider, tiny_tokenizer, ["Ana Lovo"])


def test_drift_report_on_an_unchanged_model(
    chain_model, chain_tokenizer, chain_graph, bank
) -> None:
    neighbors = mine_neighbors(chain_graph, Triple("F1", "director", "P1"), bank, k=10)
    questions = [GOLD.question]

    report = drift_report(
        chain_model,
        chain_model,
        chain_tokenizer,
        questions,
        [item.pair.question for item in neighbors.items],
        [],
        [(GOLD, neighbors)],
        beta=0.1,
    )

    assert (report.target_drift, report.neighbor_drift, report.distant_drift) == (0.0, 0.0, 0.0)
    assert -1.0 <= report.gradient_cosine <= 1.0
    assert 0.0 <= report.residual_forget_norm <= report.forget_gradient_norm + 1e-9
    assert report.forget_gradient_norm > 0.0


def test_gradients_are_flat_vectors_over_every_parameter(chain_model, chain_tokenizer) -> None:
    size = sum(value.size for value in chain_model.params.values())

    forget = forget_gradient(chain_model, chain_tokenizer, GOLD, beta=0.1)
    neighbors = neighbor_gradients(chain_model, chain_tokenizer, [GOLD, GOLD])

    assert forget.shape == (size,)
    # the NPO gradient at the reference point is -beta/2 times the NLL gradient
    np.testing.assert_allclose(forget, -0.05 * neighbors[0], rtol=1e-5, atol=1e-9)

"""Representation drift and forget/neighbor gradient geometry."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from unlearning_lab.exceptions import MetricInputError
from unlearning_lab.services.lm.sequences import prompt_ids, sequence_objective
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import DriftReport, NeighborSet, QAPair
from unlearning_lab.services.unlearn.losses import npo_grad, npo_loss

RANK_TOLERANCE = 1e-10


@dataclass(slots=True, frozen=True)
class GradientAlignment:
    cosine: float
    residual_norm: float
    forget_norm: float


def _check_compatible(pre: TransformerLM, post: TransformerLM) -> None:
    if pre.config != post.config:
        raise MetricInputError("drift needs two models with the same architecture")


def representation_drift(
    pre: TransformerLM, post: TransformerLM, tokenizer: Tokenizer, questions: Sequence[str]
) -> float:
    """Mean L2 distance between final-block states at the last prompt token."""
    _check_compatible(pre, post)
    if not questions:
        return 0.0
    distances = [
        float(
            np.linalg.norm(
                post.hidden_state(prompt_ids(tokenizer, q)).astype(np.float64)
                - pre.hidden_state(prompt_ids(tokenizer, q)).astype(np.float64)
            )
        )
        for q in questions
    ]
    return float(np.mean(distances))


def gradient_alignment(
    forget: np.ndarray, neighbors: Sequence[np.ndarray], weights: Sequence[float] | None = None
) -> GradientAlignment:
    """Cosine to the weighted neighbor gradient and the part of ``forget`` they cannot span."""
    g = np.asarray(forget, dtype=np.float64)
    forget_norm = float(np.linalg.norm(g))
    if not len(neighbors):
        return GradientAlignment(0.0, forget_norm, forget_norm)
    stacked = np.stack([np.asarray(n, dtype=np.float64) for n in neighbors])
    w = np.ones(len(neighbors)) if weights is None else np.asarray(weights, dtype=np.float64)
    aggregate = w @ stacked
    denominator = forget_norm * float(np.linalg.norm(aggregate))
    cosine = float(g @ aggregate / denominator) if denominator > 0 else 0.0

    u, s, _ = np.linalg.svd(stacked.T, full_matrices=False)
    basis = u[:, s > RANK_TOLERANCE * max(float(s.max(initial=0.0)), 1.0)]
    residual = g - basis @ (basis.T @ g)
    return GradientAlignment(
        cosine=float(np.clip(cosine, -1.0, 1.0)),
        residual_norm=float(np.linalg.norm(residual)),
        forget_norm=forget_norm,
    )


def _flatten(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[name].astype(np.float64).ravel() for name in sorted(grads)])


def forget_gradient(
    model: TransformerLM, tokenizer: Tokenizer, pair: QAPair, beta: float
) -> np.ndarray:
    """NPO forget-loss gradient at the reference point (h = 0)."""

    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        return npo_loss(0.0, beta), np.array([npo_grad(0.0, beta)])

    return _flatten(sequence_objective(model, tokenizer, [pair], objective).grads)


def neighbor_gradients(
    model: TransformerLM, tokenizer: Tokenizer, pairs: Sequence[QAPair]
) -> list[np.ndarray]:
    """Per-neighbor gradients of the answer negative log-likelihood."""
    grads = []
    for pair in pairs:

        def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
            return float(-lps[0]), np.array([-1.0])

        grads.append(_flatten(sequence_objective(model, tokenizer, [pair], objective).grads))
    return grads


def drift_report(
    pre: TransformerLM,
    post: TransformerLM,
    tokenizer: Tokenizer,
    target_questions: Sequence[str],
    neighbor_questions: Sequence[str],
    distant_questions: Sequence[str],
    anchors: Sequence[tuple[QAPair, NeighborSet]],
    beta: float,
) -> DriftReport:
    """Drift per probe group plus gradient geometry averaged over targets.

    ``anchors`` pairs each forget question/answer with its mined neighbor set; gradients
    are taken on ``pre``.
    """
    _check_compatible(pre, post)
    alignments = [
        gradient_alignment(
            forget_gradient(pre, tokenizer, pair, beta),
            neighbor_gradients(pre, tokenizer, [item.pair for item in neighbors.items]),
            neighbors.weights,
        )
        for pair, neighbors in anchors
    ]
    if alignments:
        cosine = float(np.mean([a.cosine for a in alignments]))
        residual = float(np.mean([a.residual_norm for a in alignments]))
        forget_norm = float(np.mean([a.forget_norm for a in alignments]))
    else:
        cosine = residual = forget_norm = 0.0
    return DriftReport(
        target_drift=representation_drift(pre, post, tokenizer, target_questions),
        neighbor_drift=representation_drift(pre, post, tokenizer, neighbor_questions),
        distant_drift=representation_drift(pre, post, tokenizer, distant_questions),
        gradient_cosine=cosine,
        residual_forget_norm=residual,
        forget_gradient_norm=forget_norm,
    )

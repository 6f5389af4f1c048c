"""Unlearning objectives as functions of sequence log-probabilities.

Every loss comes with its derivative with respect to the policy log-probabilities it
consumes; the trainer turns those into parameter gradients through the model's backward.
Cross-entropies are sequence negative log-likelihoods over the answer tokens.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def sigmoid(x: float) -> float:
    if x >= 0:
        return float(1.0 / (1.0 + np.exp(-x)))
    z = float(np.exp(x))
    return z / (1.0 + z)


@dataclass(slots=True, frozen=True)
class LossDecomposition:
    forget: float
    anchor: float
    retain: float
    total: float


def npo_loss(h: float, beta: float) -> float:
    """-log sigmoid(-beta * h) with h the policy/reference log-ratio."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return softplus(beta * h)


def npo_grad(h: float, beta: float) -> float:
    return beta * sigmoid(beta * h)


def anchor_loss(nlls: Sequence[float], weights: Sequence[float]) -> float:
    return float(sum(w * nll for w, nll in zip(weights, nlls, strict=True)))


def retain_loss(nlls: Sequence[float]) -> float:
    return float(np.mean(nlls)) if len(nlls) else 0.0


def neds_loss(
    forget: float, anchor: float, retain: float, lambda_: float, mu: float
) -> LossDecomposition:
    total = forget + lambda_ * anchor + mu * retain
    return LossDecomposition(forget=forget, anchor=anchor, retain=retain, total=total)


def ga_loss(forget_nll: float, retain_nlls: Sequence[float], gamma: float) -> float:
    return -forget_nll + gamma * retain_loss(retain_nlls)


def gd_loss(refusal_nll: float, retain_nlls: Sequence[float]) -> float:
    return refusal_nll + retain_loss(retain_nlls)


def preference_margin(
    delta_preferred: float, delta_dispreferred: float, beta: float
) -> float:
    return beta * (delta_preferred - delta_dispreferred)


def uldpo_loss(delta_preferred: float, delta_dispreferred: float, beta: float) -> float:
    return softplus(-preference_margin(delta_preferred, delta_dispreferred, beta))


def uldpo_grad(delta_preferred: float, delta_dispreferred: float, beta: float) -> float:
    """Derivative with respect to ``delta_preferred``; the dispreferred side is its negation."""
    return -beta * sigmoid(-preference_margin(delta_preferred, delta_dispreferred, beta))

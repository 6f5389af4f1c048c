from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from unlearning_lab.exceptions import NumericError, PreconditionError


@dataclass(slots=True)
class AdamWHyper:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass(slots=True)
class AdamW:
    """Decoupled weight-decay Adam; parameters are updated in place."""

    hyper: AdamWHyper
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def step(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        learning_rate: float | None = None,
    ) -> None:
        lr = self.hyper.learning_rate if learning_rate is None else learning_rate
        b1, b2 = self.hyper.beta1, self.hyper.beta2
        self.step_count += 1
        correction1 = 1.0 - b1**self.step_count
        correction2 = 1.0 - b2**self.step_count
        for name, grad in grads.items():
            param = params[name]
            if grad.shape != param.shape:
                raise PreconditionError(
                    f"gradient shape {grad.shape} does not match parameter {name} {param.shape}"
                )
            m = self.first_moment.setdefault(name, np.zeros_like(param))
            v = self.second_moment.setdefault(name, np.zeros_like(param))
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            if self.hyper.weight_decay:
                param *= 1.0 - lr * self.hyper.weight_decay
            update = (m / correction1) / (np.sqrt(v / correction2) + self.hyper.eps)
            param -= (lr * update).astype(param.dtype, copy=False)
        check_finite(params)


def adamw_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], hyper: AdamWHyper
) -> dict[str, np.ndarray]:
    """Single step from fresh optimizer state, returning updated copies."""
    updated = {name: value.copy() for name, value in params.items()}
    AdamW(hyper).step(updated, grads)
    return updated


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NumericError("gradient norm is not finite")
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for grad in grads.values():
            grad *= scale
    return norm


def check_finite(params: dict[str, np.ndarray]) -> None:
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NumericError(f"parameter {name} is not finite after the update")


def accumulate(total: dict[str, np.ndarray] | None, grads: dict[str, np.ndarray], scale: float):
    if total is None:
        return {name: grad * scale for name, grad in grads.items()}
    for name, grad in grads.items():
        total[name] += grad * scale
    return total


def warmup_rate(base: float, step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0 or step >= warmup_steps:
        return base
    return base * (step + 1) / warmup_steps

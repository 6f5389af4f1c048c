from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from unlearning_lab.exceptions import NumericError, PreconditionError, TrainingDivergedError
from unlearning_lab.schemas import PretrainConfig
from unlearning_lab.services.lm.optim import (
    AdamW,
    AdamWHyper,
    accumulate,
    clip_grad_norm,
    warmup_rate,
)
from unlearning_lab.services.lm.sequences import Batch, TrainingExample, collate
from unlearning_lab.services.lm.transformer import TransformerLM

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class PretrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    accuracy_history: list[tuple[int, float]] = field(default_factory=list)
    initial_loss: float = math.nan
    steps: int = 0
    reached_target: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)


def batch_loss_and_grads(
    model: TransformerLM, batch: Batch, rng: np.random.Generator | None = None
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean token negative log-likelihood over masked positions and its gradient."""
    run = model.forward(batch.inputs, rng=rng)
    token_lp = run.token_logprobs(batch.targets)
    count = max(batch.token_count, 1.0)
    loss = float(-(token_lp * batch.mask).sum() / count)
    if not math.isfinite(loss):
        raise NumericError("training loss is not finite")
    grads = model.backward(run, batch.targets, -batch.mask / count)
    return loss, grads


def corpus_loss(model: TransformerLM, examples: Sequence[TrainingExample], pad_id: int) -> float:
    total = 0.0
    tokens = 0.0
    for start in range(0, len(examples), 64):
        batch = collate(examples[start : start + 64], pad_id)
        token_lp = model.forward(batch.inputs).token_logprobs(batch.targets)
        total -= float((token_lp * batch.mask).sum())
        tokens += batch.token_count
    return total / max(tokens, 1.0)


def pretrain(
    model: TransformerLM,
    examples: Sequence[TrainingExample],
    config: PretrainConfig,
    pad_id: int,
    *,
    evaluate: Callable[[TransformerLM], float] | None = None,
) -> PretrainResult:
    """Train all parameters on the corpus until the accuracy target or the epoch limit.

    ``evaluate`` returns direct-probe accuracy and runs every ``eval_interval`` epochs.
    """
    if not examples:
        raise PreconditionError("pretraining corpus is empty")
    rng = np.random.default_rng(config.seed)
    optimizer = AdamW(
        AdamWHyper(learning_rate=config.learning_rate, weight_decay=config.weight_decay)
    )
    result = PretrainResult(initial_loss=corpus_loss(model, examples, pad_id))
    logger.info(
        "pretraining on %d sequences, initial loss %.4f", len(examples), result.initial_loss
    )

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples))
        batches = [
            [examples[int(i)] for i in order[start : start + config.batch_size]]
            for start in range(0, len(order), config.batch_size)
        ]
        epoch_loss = 0.0
        pending = None
        for index, chunk in enumerate(batches, start=1):
            try:
                loss, grads = batch_loss_and_grads(model, collate(chunk, pad_id))
                epoch_loss += loss
                pending = accumulate(pending, grads, 1.0 / config.gradient_accumulation)
                if index % config.gradient_accumulation == 0 or index == len(batches):
                    clip_grad_norm(pending, config.grad_clip)
                    rate = warmup_rate(config.learning_rate, result.steps, config.warmup_steps)
                    optimizer.step(model.trainable_parameters(), pending, learning_rate=rate)
                    result.steps += 1
                    pending = None
            except NumericError as exc:
                raise TrainingDivergedError(
                    "pretraining diverged",
                    diagnostics={"epoch": epoch, "step": result.steps, "reason": str(exc)},
                ) from exc

        mean_loss = epoch_loss / len(batches)
        result.epoch_losses.append(mean_loss)
        logger.info("epoch %d: loss %.4f", epoch, mean_loss)

        if evaluate is not None and (epoch % config.eval_interval == 0 or epoch == config.epochs):
            accuracy = evaluate(model)
            result.accuracy_history.append((epoch, accuracy))
            logger.info("epoch %d: direct-probe accuracy %.3f", epoch, accuracy)
            if accuracy >= config.accuracy_target:
                result.reached_target = True
                break
    return result

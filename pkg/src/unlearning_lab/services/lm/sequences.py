"""Token layouts shared by pretraining, unlearning and evaluation.

Questions are encoded as ``[BOS] question [SEP]`` and followed by the answer tokens;
statements as ``[BOS] statement [EOS]`` with every position in the loss.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from unlearning_lab.exceptions import NumericError, PreconditionError
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import QAPair

CoefficientFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(slots=True, frozen=True)
class TrainingExample:
    token_ids: tuple[int, ...]
    # 1.0 where the next token is part of the loss, aligned with token_ids[1:]
    loss_mask: tuple[float, ...]


@dataclass(slots=True)
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray

    @property
    def token_count(self) -> float:
        return float(self.mask.sum())


def prompt_ids(tokenizer: Tokenizer, question: str) -> list[int]:
    return [tokenizer.bos_id, *tokenizer.encode(question), tokenizer.sep_id]


def answer_ids(tokenizer: Tokenizer, answer: str) -> list[int]:
    ids = tokenizer.encode(answer)
    if not ids:
        raise PreconditionError(f"answer {answer!r} encodes to no tokens")
    return ids


def qa_example(
    tokenizer: Tokenizer, question: str, answer: str, *, eos: bool = True
) -> TrainingExample:
    prompt = prompt_ids(tokenizer, question)
    completion = answer_ids(tokenizer, answer) + ([tokenizer.eos_id] if eos else [])
    ids = prompt + completion
    mask = [0.0] * (len(prompt) - 1) + [1.0] * len(completion)
    return TrainingExample(tuple(ids), tuple(mask))


def statement_example(tokenizer: Tokenizer, text: str) -> TrainingExample:
    ids = [tokenizer.bos_id, *tokenizer.encode(text), tokenizer.eos_id]
    return TrainingExample(tuple(ids), tuple([1.0] * (len(ids) - 1)))


def collate(examples: Sequence[TrainingExample], pad_id: int) -> Batch:
    """Right-pad a batch; padded positions carry zero loss weight."""
    if not examples:
        raise PreconditionError("cannot collate an empty batch")
    width = max(len(example.token_ids) for example in examples) - 1
    inputs = np.full((len(examples), width), pad_id, dtype=np.int64)
    targets = np.full((len(examples), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(examples), width), dtype=np.float64)
    for row, example in enumerate(examples):
        length = len(example.token_ids) - 1
        inputs[row, :length] = example.token_ids[:-1]
        targets[row, :length] = example.token_ids[1:]
        mask[row, :length] = example.loss_mask
    return Batch(inputs, targets, mask)


def answer_logprob(
    model: TransformerLM, tokenizer: Tokenizer, question: str, answer: str
) -> float:
    return model.sequence_logprob(prompt_ids(tokenizer, question), answer_ids(tokenizer, answer))


def generate_answer(
    model: TransformerLM, tokenizer: Tokenizer, question: str, max_len: int
) -> str:
    ids = model.greedy_decode(prompt_ids(tokenizer, question), max_len, tokenizer.eos_id)
    return tokenizer.decode(ids)


@dataclass(slots=True, frozen=True)
class TermResult:
    loss: float
    grads: dict[str, np.ndarray]
    logprobs: np.ndarray


def _pair_batch(tokenizer: Tokenizer, pairs: Sequence[QAPair]) -> Batch:
    examples = [qa_example(tokenizer, p.question, p.answer, eos=False) for p in pairs]
    return collate(examples, tokenizer.pad_id)


def score_pairs(model: TransformerLM, tokenizer: Tokenizer, pairs: Sequence[QAPair]) -> np.ndarray:
    """Answer log-probabilities of each pair, no gradients."""
    batch = _pair_batch(tokenizer, pairs)
    token_lp = model.forward(batch.inputs).token_logprobs(batch.targets)
    return (token_lp * batch.mask).sum(axis=1).astype(np.float64)


def sequence_objective(
    model: TransformerLM,
    tokenizer: Tokenizer,
    pairs: Sequence[QAPair],
    objective: CoefficientFn,
    rng: np.random.Generator | None = None,
) -> TermResult:
    """One forward/backward over ``pairs``.

    ``objective`` maps the answer log-probabilities to the loss value and its derivative
    with respect to each of them.
    """
    batch = _pair_batch(tokenizer, pairs)
    run = model.forward(batch.inputs, rng=rng)
    token_lp = run.token_logprobs(batch.targets)
    logprobs = (token_lp * batch.mask).sum(axis=1).astype(np.float64)
    if not np.all(np.isfinite(logprobs)):
        raise NumericError("sequence log-probability is not finite")
    loss, coefficients = objective(logprobs)
    grads = model.backward(run, batch.targets, np.asarray(coefficients)[:, None] * batch.mask)
    return TermResult(loss=loss, grads=grads, logprobs=logprobs)

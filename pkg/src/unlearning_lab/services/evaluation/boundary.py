"""Output-space boundary diagnostics between forget, neighbor and retain answers."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np

from unlearning_lab.exceptions import MetricInputError
from unlearning_lab.services.lm.sequences import answer_ids, collate, prompt_ids, qa_example
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import BoundaryReport, QAPair


def roc_auc(forget_scores: Sequence[float], retain_scores: Sequence[float]) -> float:
    """P(forget score < retain score), ties counted as one half."""
    if not len(forget_scores) or not len(retain_scores):
        raise MetricInputError("roc_auc needs forget and retain scores")
    f = np.asarray(forget_scores, dtype=np.float64)[:, None]
    r = np.asarray(retain_scores, dtype=np.float64)[None, :]
    wins = np.count_nonzero(f < r) + 0.5 * np.count_nonzero(f == r)
    return float(wins / (f.size * r.size))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) for probability rows."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    tiny = np.finfo(np.float64).tiny
    log_ratio = np.log(np.maximum(p, tiny)) - np.log(np.maximum(q, tiny))
    terms = np.where(p > 0, p * log_ratio, 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


def answer_position_kl(
    policy: TransformerLM,
    reference: TransformerLM,
    tokenizer: Tokenizer,
    pair: QAPair,
    policy_question: str | None = None,
) -> float:
    """Mean KL between next-token distributions at the gold-answer positions."""
    answer = answer_ids(tokenizer, pair.answer)
    ref_ids = [*prompt_ids(tokenizer, pair.question), *answer]
    pol_ids = [*prompt_ids(tokenizer, policy_question or pair.question), *answer]
    ref_probs = reference.forward(ref_ids[:-1]).probs()[0, -len(answer) :]
    pol_probs = policy.forward(pol_ids[:-1]).probs()[0, -len(answer) :]
    return float(kl_divergence(pol_probs, ref_probs).mean())


def _logprobs(
    model: TransformerLM,
    tokenizer: Tokenizer,
    pairs: Sequence[QAPair],
    wrap: Callable[[str], str] | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sequence log-probabilities and answer lengths, scored in one batch."""
    examples = [
        qa_example(tokenizer, wrap(p.question) if wrap else p.question, p.answer, eos=False)
        for p in pairs
    ]
    batch = collate(examples, tokenizer.pad_id)
    token_lp = model.forward(batch.inputs).token_logprobs(batch.targets)
    return (token_lp * batch.mask).sum(axis=1).astype(np.float64), batch.mask.sum(axis=1)


def boundary_report(
    policy: TransformerLM,
    reference: TransformerLM,
    tokenizer: Tokenizer,
    forget: Sequence[QAPair],
    retain: Sequence[QAPair],
    neighbors: Sequence[QAPair],
    epsilon: float,
    refusal: str,
    wrap: Callable[[str], str] | None = None,
) -> BoundaryReport:
    """Compare the policy with the frozen reference on forget, retain and neighbor answers.

    Probabilities are per-token geometric means; ``logprob_gap`` is the mean retain minus
    the mean forget per-token log-probability. ``wrap`` rewrites policy-side questions.
    """
    if not forget or not retain or not neighbors:
        raise MetricInputError("boundary report needs forget, retain and neighbor pairs")
    if epsilon <= 0:
        raise MetricInputError("epsilon must be > 0")
    forget_lp, forget_len = _logprobs(policy, tokenizer, forget, wrap)
    retain_lp, retain_len = _logprobs(policy, tokenizer, retain, wrap)
    forget_token_lp = forget_lp / forget_len
    retain_token_lp = retain_lp / retain_len
    forget_prob = np.exp(forget_token_lp)
    retain_prob = np.exp(retain_token_lp)

    neighbor_pol, _ = _logprobs(policy, tokenizer, neighbors, wrap)
    neighbor_ref, _ = _logprobs(reference, tokenizer, neighbors, None)
    within = np.abs(neighbor_pol - neighbor_ref) <= epsilon

    refusals = [QAPair(pair.question, refusal) for pair in forget]
    refusal_lp, _ = _logprobs(policy, tokenizer, refusals, wrap)

    def _kl(pairs: Sequence[QAPair]) -> float:
        return float(
            np.mean(
                [
                    answer_position_kl(
                        policy, reference, tokenizer, pair, wrap(pair.question) if wrap else None
                    )
                    for pair in pairs
                ]
            )
        )

    p_forget = float(forget_prob.mean())
    p_retain = float(retain_prob.mean())
    return BoundaryReport(
        p_forget=p_forget,
        p_retain=p_retain,
        ratio=p_retain / p_forget if p_forget > 0 else math.inf,
        logprob_gap=float(retain_token_lp.mean() - forget_token_lp.mean()),
        roc_auc=roc_auc(forget_prob, retain_prob),
        mean_kl_forget=_kl(forget),
        mean_kl_neighbor=_kl(neighbors),
        neighbor_within_epsilon_fraction=float(within.mean()),
        epsilon=epsilon,
        refusal_preferred_fraction=float(np.mean(refusal_lp > forget_lp)),
    )

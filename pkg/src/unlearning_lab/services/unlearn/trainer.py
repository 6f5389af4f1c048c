from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from unlearning_lab.exceptions import NumericError, PreconditionError, TrainingDivergedError
from unlearning_lab.schemas import AdapterConfig, UnlearnConfig
from unlearning_lab.services.bench.templates import TemplateBank
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.lm.optim import AdamW, AdamWHyper, accumulate, clip_grad_norm
from unlearning_lab.services.lm.sequences import TermResult, score_pairs, sequence_objective
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.types import (
    BenchmarkCase,
    EpochLosses,
    ForgetItem,
    NeighborSet,
    QAPair,
    UnlearnRun,
)
from unlearning_lab.services.unlearn import losses
from unlearning_lab.services.unlearn.neighbors import case_neighbor_sets, retain_training_pool

logger = logging.getLogger(__name__)

Grads = dict[str, np.ndarray]


class ReferencePolicy:
    """Frozen pre-unlearning policy with memoized answer log-probabilities.

    With adapters attached this is the same model with adapters disabled; otherwise a
    parameter snapshot taken at construction.
    """

    def __init__(self, model: TransformerLM, tokenizer: Tokenizer) -> None:
        self.tokenizer = tokenizer
        self._live = model if model.adapters is not None else None
        self._frozen = (
            None
            if self._live is not None
            else TransformerLM(
                model.config, {k: v.copy() for k, v in model.params.items()}, dtype=model.dtype
            )
        )
        self._cache: dict[QAPair, float] = {}

    @property
    def model(self) -> TransformerLM:
        return self._live if self._live is not None else self._frozen  # type: ignore[return-value]

    def logprobs(self, pairs: Sequence[QAPair]) -> np.ndarray:
        missing = [pair for pair in dict.fromkeys(pairs) if pair not in self._cache]
        if missing:
            if self._live is not None:
                with self._live.adapters_disabled():
                    scores = score_pairs(self._live, self.tokenizer, missing)
            else:
                scores = score_pairs(self.model, self.tokenizer, missing)
            self._cache.update(zip(missing, (float(s) for s in scores), strict=True))
        return np.array([self._cache[pair] for pair in pairs], dtype=np.float64)


def _gold(item: ForgetItem) -> QAPair:
    return QAPair(item.probe.question, item.probe.answer)


def _refusal(item: ForgetItem) -> QAPair:
    return QAPair(item.probe.question, item.refusal)


def loss_npo(
    policy: TransformerLM,
    reference: ReferencePolicy,
    tokenizer: Tokenizer,
    item: ForgetItem,
    beta: float,
    rng: np.random.Generator | None = None,
) -> TermResult:
    ref = reference.logprobs([_gold(item)])

    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        h = float(lps[0] - ref[0])
        return losses.npo_loss(h, beta), np.array([losses.npo_grad(h, beta)])

    return sequence_objective(policy, tokenizer, [_gold(item)], objective, rng)


def loss_anchor(
    policy: TransformerLM,
    tokenizer: Tokenizer,
    neighbors: NeighborSet,
    rng: np.random.Generator | None = None,
) -> TermResult:
    weights = np.array(neighbors.weights, dtype=np.float64)

    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        return losses.anchor_loss(-lps, weights), -weights

    pairs = [item.pair for item in neighbors.items]
    return sequence_objective(policy, tokenizer, pairs, objective, rng)


def loss_retain(
    policy: TransformerLM,
    tokenizer: Tokenizer,
    pairs: Sequence[QAPair],
    rng: np.random.Generator | None = None,
) -> TermResult:
    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        return losses.retain_loss(-lps), np.full(len(lps), -1.0 / len(lps))

    return sequence_objective(policy, tokenizer, pairs, objective, rng)


def loss_forget_nll(
    policy: TransformerLM,
    tokenizer: Tokenizer,
    pair: QAPair,
    sign: float,
    rng: np.random.Generator | None = None,
) -> TermResult:
    """``sign * NLL(pair)``: -1 ascends on the gold answer, +1 descends on a refusal."""

    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        return sign * float(-lps[0]), np.array([-sign])

    return sequence_objective(policy, tokenizer, [pair], objective, rng)


def loss_uldpo(
    policy: TransformerLM,
    reference: ReferencePolicy,
    tokenizer: Tokenizer,
    preferred: QAPair,
    dispreferred: QAPair,
    beta: float,
    rng: np.random.Generator | None = None,
) -> TermResult:
    pairs = [preferred, dispreferred]
    ref = reference.logprobs(pairs)

    def objective(lps: np.ndarray) -> tuple[float, np.ndarray]:
        delta = lps - ref
        slope = losses.uldpo_grad(float(delta[0]), float(delta[1]), beta)
        loss = losses.uldpo_loss(float(delta[0]), float(delta[1]), beta)
        return loss, np.array([slope, -slope])

    return sequence_objective(policy, tokenizer, pairs, objective, rng)


def _add(total: Grads | None, grads: Grads, scale: float) -> Grads | None:
    if scale == 0.0:
        return total
    if total is None:
        return grads if scale == 1.0 else {name: g * scale for name, g in grads.items()}
    for name, grad in grads.items():
        total[name] += grad if scale == 1.0 else grad * scale
    return total


def forget_items(cases: Sequence[BenchmarkCase], refusal: str) -> list[ForgetItem]:
    items = []
    for case in cases:
        for probe in case.probes:
            if probe.split != "forget_train":
                continue
            if probe.probe_type != "direct" or probe.template_family != "QA":
                raise PreconditionError(f"{probe.probe_id} is not a direct QA training probe")
            items.append(ForgetItem(probe=probe, refusal=refusal))
    if not items:
        raise PreconditionError("benchmark holds no forget_train probes")
    return items


class Unlearner:
    """Runs one unlearning method over every forget item of a benchmark."""

    def __init__(
        self,
        model: TransformerLM,
        graph: KnowledgeGraph,
        bank: TemplateBank,
        tokenizer: Tokenizer,
        cases: Sequence[BenchmarkCase],
        config: UnlearnConfig,
    ) -> None:
        self.model = model
        self.graph = graph
        self.bank = bank
        self.tokenizer = tokenizer
        self.cases = list(cases)
        self.config = config
        self.items = forget_items(self.cases, config.refusal)
        self.reference = ReferencePolicy(model, tokenizer)
        self.retain_pool = (
            retain_training_pool(graph, bank, self.cases) if self._uses_retain() else []
        )
        self.neighbors = self._neighbor_sets() if self._uses_anchor() else {}
        self._dropout_rng = np.random.default_rng(config.seed + 1)
        self._retain_rng = np.random.default_rng(config.seed + 2)
        if self._uses_retain() and not self.retain_pool:
            logger.warning("retain training pool is empty; the retain term is skipped")

    def _uses_anchor(self) -> bool:
        return self.config.method == "NEDS" and self.config.lambda_ > 0

    def _uses_retain(self) -> bool:
        method, cfg = self.config.method, self.config
        if method == "NEDS":
            return cfg.mu > 0
        if method == "NPO":
            return cfg.npo_retain and cfg.mu > 0
        if method == "GA":
            return cfg.gamma > 0
        return method in ("GD", "ULDPO")

    def _neighbor_sets(self) -> dict[str, NeighborSet]:
        return case_neighbor_sets(
            self.graph,
            self.bank,
            self.cases,
            k=self.config.k,
            hops=self.config.neighbor_hops,
            uniform_weights=self.config.uniform_weights,
            corruption_rate=self.config.corruption_rate,
            seed=self.config.seed,
        )

    def _retain_batch(self) -> list[QAPair]:
        size = min(self.config.retain_batch_size, len(self.retain_pool))
        picks = self._retain_rng.choice(len(self.retain_pool), size=size, replace=False)
        return [self.retain_pool[int(i)] for i in sorted(picks)]

    def objective(self, item: ForgetItem) -> tuple[losses.LossDecomposition, Grads]:
        cfg = self.config
        rng = self._dropout_rng
        anchor = retain = 0.0
        grads: Grads | None = None
        retain_scale = 0.0

        if cfg.method in ("NPO", "NEDS"):
            term = loss_npo(self.model, self.reference, self.tokenizer, item, cfg.beta, rng)
            forget, grads = term.loss, term.grads
            if cfg.method == "NEDS" and cfg.lambda_ > 0:
                anchored = loss_anchor(
                    self.model, self.tokenizer, self.neighbors[item.probe.case_id], rng
                )
                anchor = anchored.loss
                grads = _add(grads, anchored.grads, cfg.lambda_)
            retain_scale = cfg.mu if self._uses_retain() else 0.0
        elif cfg.method == "GA":
            term = loss_forget_nll(self.model, self.tokenizer, _gold(item), -1.0, rng)
            forget, grads = term.loss, term.grads
            retain_scale = cfg.gamma
        elif cfg.method == "GD":
            term = loss_forget_nll(self.model, self.tokenizer, _refusal(item), 1.0, rng)
            forget, grads = term.loss, term.grads
            retain_scale = 1.0
        elif cfg.method == "ULDPO":
            term = loss_uldpo(
                self.model,
                self.reference,
                self.tokenizer,
                _refusal(item),
                _gold(item),
                cfg.beta,
                rng,
            )
            forget, grads = term.loss, term.grads
            if self.retain_pool:
                kept = self._retain_batch()[0]
                paired = loss_uldpo(
                    self.model,
                    self.reference,
                    self.tokenizer,
                    kept,
                    QAPair(kept.question, item.refusal),
                    cfg.beta,
                    rng,
                )
                retain = paired.loss
                grads = _add(grads, paired.grads, 1.0)
            total = forget + retain
            assert grads is not None
            return losses.LossDecomposition(forget, anchor, retain, total), grads
        else:
            raise PreconditionError(f"method {cfg.method} has no training objective")

        if retain_scale > 0 and self.retain_pool:
            kept = loss_retain(self.model, self.tokenizer, self._retain_batch(), rng)
            retain = kept.loss
            grads = _add(grads, kept.grads, retain_scale)
        total = forget + cfg.lambda_ * anchor + retain_scale * retain
        assert grads is not None
        return losses.LossDecomposition(forget, anchor, retain, total), grads

    def run(self, reference_checkpoint: str | None = None) -> UnlearnRun:
        cfg = self.config
        run = UnlearnRun(method=cfg.method, reference_checkpoint=reference_checkpoint)
        order_rng = np.random.default_rng(cfg.seed)
        optimizer = AdamW(
            AdamWHyper(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
        )
        params = self.model.trainable_parameters()
        last_good = self.model.snapshot()
        for epoch in range(1, cfg.epochs + 1):
            sums = np.zeros(4)
            pending: Grads | None = None
            order = order_rng.permutation(len(self.items))
            try:
                for position, index in enumerate(order, start=1):
                    decomposition, grads = self.objective(self.items[int(index)])
                    sums += (
                        decomposition.forget,
                        decomposition.anchor,
                        decomposition.retain,
                        decomposition.total,
                    )
                    if not np.isfinite(decomposition.total):
                        raise NumericError("unlearning loss is not finite")
                    pending = accumulate(pending, grads, 1.0 / cfg.gradient_accumulation)
                    if position % cfg.gradient_accumulation == 0 or position == len(order):
                        assert pending is not None
                        clip_grad_norm(pending, cfg.grad_clip)
                        optimizer.step(params, pending)
                        run.steps += 1
                        pending = None
            except NumericError as exc:
                self.model.restore(last_good)
                raise TrainingDivergedError(
                    f"{cfg.method} unlearning diverged; restored the end of epoch {epoch - 1}",
                    diagnostics={"epoch": epoch, "step": run.steps, "reason": str(exc)},
                ) from exc
            means = sums / len(order)
            record = EpochLosses(epoch, run.steps, *(float(v) for v in means))
            run.epochs.append(record)
            last_good = self.model.snapshot()
            logger.info(
                "%s epoch %d: forget %.4f anchor %.4f retain %.4f total %.4f",
                cfg.method,
                epoch,
                record.forget,
                record.anchor,
                record.retain,
                record.total,
            )
        return run


def run_unlearn(
    model: TransformerLM,
    cases: Sequence[BenchmarkCase],
    graph: KnowledgeGraph,
    bank: TemplateBank,
    tokenizer: Tokenizer,
    config: UnlearnConfig,
    adapters: AdapterConfig | None = None,
    *,
    reference_checkpoint: str | None = None,
) -> UnlearnRun:
    """Unlearn every forget_train target in place; ICU returns without touching the model."""
    if config.method == "ICU":
        forget_items(cases, config.refusal)
        logger.info("ICU is inference-time only; no parameters change")
        return UnlearnRun(method="ICU", reference_checkpoint=reference_checkpoint)
    if adapters is not None and adapters.enabled and model.adapters is None:
        model.attach_adapters(
            adapters.rank,
            adapters.alpha,
            adapters.dropout,
            tuple(adapters.targets),
            seed=config.seed,
        )
    unlearner = Unlearner(model, graph, bank, tokenizer, cases, config)
    return unlearner.run(reference_checkpoint)

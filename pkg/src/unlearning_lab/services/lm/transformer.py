"""Decoder-only toy language model with hand-written reverse-mode gradients.

Pre-LN blocks (causal multi-head attention, GELU feed-forward), learned positional
embeddings and an untied output projection. Low-rank adapters wrap the attention and
feed-forward matrices; while they are attached and enabled only adapter tensors train.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from unlearning_lab.exceptions import (
    AdapterError,
    NumericError,
    PreconditionError,
    SequenceLengthError,
)
from unlearning_lab.schemas import ModelConfig

LN_EPS = 1e-5
INIT_STD = 0.02
GELU_C = math.sqrt(2.0 / math.pi)
ADAPTABLE = ("wq", "wk", "wv", "wo", "w1", "w2")


def parameter_names(config: ModelConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for layer in range(config.n_layers):
        prefix = f"layers.{layer}"
        names += [
            f"{prefix}.ln1.scale",
            f"{prefix}.ln1.offset",
            f"{prefix}.attn.wq",
            f"{prefix}.attn.wk",
            f"{prefix}.attn.wv",
            f"{prefix}.attn.wo",
            f"{prefix}.ln2.scale",
            f"{prefix}.ln2.offset",
            f"{prefix}.ff.w1",
            f"{prefix}.ff.b1",
            f"{prefix}.ff.w2",
            f"{prefix}.ff.b2",
        ]
    return [*names, "ln_f.scale", "ln_f.offset", "out.w"]


def _shape(config: ModelConfig, name: str) -> tuple[int, ...]:
    d, f = config.d_model, config.d_ff
    vocab = config.vocab_size or 0
    leaf = name.rsplit(".", 1)[-1]
    if name == "tok_emb":
        return (vocab, d)
    if name == "pos_emb":
        return (config.max_seq_len, d)
    if name == "out.w":
        return (d, vocab)
    return {
        "scale": (d,),
        "offset": (d,),
        "wq": (d, d),
        "wk": (d, d),
        "wv": (d, d),
        "wo": (d, d),
        "w1": (d, f),
        "b1": (f,),
        "w2": (f, d),
        "b2": (d,),
    }[leaf]


def init_parameters(config: ModelConfig, dtype: type = np.float32) -> dict[str, np.ndarray]:
    if not config.vocab_size:
        raise PreconditionError("model config needs a vocab_size")
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(config):
        shape = _shape(config, name)
        if name.endswith(".scale"):
            params[name] = np.ones(shape, dtype=dtype)
        elif name.endswith((".offset", ".b1", ".b2")):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = (rng.standard_normal(shape) * INIT_STD).astype(dtype)
    return params


@dataclass(slots=True)
class LoRAAdapters:
    rank: int
    alpha: float
    dropout: float
    targets: tuple[str, ...]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def wrapped(self) -> list[str]:
        return sorted({name.rsplit(".lora_", 1)[0] for name in self.tensors})


@dataclass(slots=True)
class ForwardPass:
    token_ids: np.ndarray
    logits: np.ndarray
    hidden: np.ndarray
    caches: dict[str, object]

    def log_probs(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def probs(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=-1, keepdims=True)

    def token_logprobs(self, targets: np.ndarray) -> np.ndarray:
        log_probs = self.log_probs()
        return np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]


def _layer_norm(x: np.ndarray, scale: np.ndarray, offset: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv
    return xhat * scale + offset, (xhat, inv)


def _layer_norm_backward(dy: np.ndarray, cache, scale: np.ndarray):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dscale = (dy * xhat).sum(axis=axes)
    doffset = dy.sum(axis=axes)
    dxhat = dy * scale
    n = dy.shape[-1]
    dx = (inv / n) * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dscale, doffset


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + 0.044715 * x**3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * GELU_C * (1.0 + 3 * 0.044715 * x**2)


class TransformerLM:
    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, np.ndarray] | None = None,
        *,
        dtype: type = np.float32,
    ) -> None:
        if not config.vocab_size:
            raise PreconditionError("model config needs a vocab_size")
        self.config = config
        self.dtype = dtype
        self.params = params if params is not None else init_parameters(config, dtype)
        self.adapters: LoRAAdapters | None = None
        self.adapters_enabled = True
        self._causal = np.tril(np.ones((config.max_seq_len, config.max_seq_len), dtype=bool))

    # adapters

    @property
    def adapters_active(self) -> bool:
        return self.adapters is not None and self.adapters_enabled

    def attach_adapters(
        self,
        rank: int,
        alpha: float,
        dropout: float = 0.0,
        targets: Sequence[str] = ADAPTABLE,
        seed: int = 0,
    ) -> LoRAAdapters:
        if rank < 1:
            raise AdapterError("adapter rank must be >= 1")
        if self.adapters is not None:
            raise AdapterError("adapters are already attached")
        unknown = sorted(set(targets) - set(ADAPTABLE))
        if unknown:
            raise AdapterError(f"cannot wrap matrices {unknown}")
        rng = np.random.default_rng(seed)
        adapters = LoRAAdapters(rank=rank, alpha=alpha, dropout=dropout, targets=tuple(targets))
        for name in parameter_names(self.config):
            if name.rsplit(".", 1)[-1] not in targets:
                continue
            d_in, d_out = self.params[name].shape
            if rank > min(d_in, d_out):
                raise AdapterError(f"rank {rank} exceeds the dimensions of {name} {(d_in, d_out)}")
            adapters.tensors[f"{name}.lora_a"] = (
                rng.standard_normal((d_in, rank)) / math.sqrt(d_in)
            ).astype(self.dtype)
            adapters.tensors[f"{name}.lora_b"] = np.zeros((rank, d_out), dtype=self.dtype)
        self.adapters = adapters
        self.adapters_enabled = True
        return adapters

    def detach_adapters(self) -> LoRAAdapters | None:
        adapters, self.adapters = self.adapters, None
        return adapters

    def merge_adapters(self) -> None:
        if self.adapters is None:
            raise AdapterError("no adapters to merge")
        scale = self.adapters.scale
        for name in self.adapters.wrapped():
            a = self.adapters.tensors[f"{name}.lora_a"]
            b = self.adapters.tensors[f"{name}.lora_b"]
            self.params[name] = (self.params[name] + scale * (a @ b)).astype(self.dtype)
        self.adapters = None

    @contextmanager
    def adapters_disabled(self) -> Iterator[TransformerLM]:
        previous = self.adapters_enabled
        self.adapters_enabled = False
        try:
            yield self
        finally:
            self.adapters_enabled = previous

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        if self.adapters_active:
            assert self.adapters is not None
            return self.adapters.tensors
        return self.params

    def astype(self, dtype: type) -> TransformerLM:
        clone = TransformerLM(
            self.config, {k: v.astype(dtype) for k, v in self.params.items()}, dtype=dtype
        )
        if self.adapters is not None:
            clone.adapters = LoRAAdapters(
                rank=self.adapters.rank,
                alpha=self.adapters.alpha,
                dropout=self.adapters.dropout,
                targets=self.adapters.targets,
                tensors={k: v.astype(dtype) for k, v in self.adapters.tensors.items()},
            )
            clone.adapters_enabled = self.adapters_enabled
        return clone

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.trainable_parameters().items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        target = self.trainable_parameters()
        for name, value in snapshot.items():
            target[name][...] = value

    # forward

    def _linear(self, x: np.ndarray, name: str, caches: dict, rng) -> np.ndarray:
        y = x @ self.params[name]
        adapters = self.adapters if self.adapters_enabled else None
        if adapters is None or f"{name}.lora_a" not in adapters.tensors:
            caches[name] = (x, None, None)
            return y
        mask = None
        if rng is not None and adapters.dropout > 0.0:
            keep = 1.0 - adapters.dropout
            mask = ((rng.random(x.shape) < keep) / keep).astype(self.dtype)
        xa = x * mask if mask is not None else x
        u = xa @ adapters.tensors[f"{name}.lora_a"]
        y = y + adapters.scale * (u @ adapters.tensors[f"{name}.lora_b"])
        caches[name] = (x, mask, u)
        return y

    def forward(
        self, token_ids: np.ndarray | Sequence[int], *, rng: np.random.Generator | None = None
    ) -> ForwardPass:
        """Run the model; ``rng`` switches on adapter dropout (training mode)."""
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        batch, length = ids.shape
        if length > self.config.max_seq_len:
            raise SequenceLengthError(
                f"sequence of {length} tokens exceeds max_seq_len {self.config.max_seq_len}"
            )
        if length == 0:
            raise PreconditionError("cannot run the model on an empty sequence")
        p = self.params
        d = self.config.d_model
        heads = self.config.n_heads
        dh = d // heads
        caches: dict[str, object] = {}

        x = p["tok_emb"][ids] + p["pos_emb"][:length]
        mask = self._causal[:length, :length]
        for layer in range(self.config.n_layers):
            pre = f"layers.{layer}"
            h, caches[f"{pre}.ln1"] = _layer_norm(x, p[f"{pre}.ln1.scale"], p[f"{pre}.ln1.offset"])
            h2d = h.reshape(batch * length, d)
            q = self._linear(h2d, f"{pre}.attn.wq", caches, rng)
            k = self._linear(h2d, f"{pre}.attn.wk", caches, rng)
            v = self._linear(h2d, f"{pre}.attn.wv", caches, rng)
            q, k, v = (
                t.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3) for t in (q, k, v)
            )
            scores = (q @ k.transpose(0, 1, 3, 2)) / math.sqrt(dh)
            scores = np.where(mask, scores, -np.inf)
            scores = scores - scores.max(axis=-1, keepdims=True)
            att = np.exp(scores)
            att = att / att.sum(axis=-1, keepdims=True)
            ctx = (att @ v).transpose(0, 2, 1, 3).reshape(batch * length, d)
            caches[f"{pre}.attn"] = (q, k, v, att)
            x = x + self._linear(ctx, f"{pre}.attn.wo", caches, rng).reshape(batch, length, d)

            h, caches[f"{pre}.ln2"] = _layer_norm(x, p[f"{pre}.ln2.scale"], p[f"{pre}.ln2.offset"])
            a = self._linear(h.reshape(batch * length, d), f"{pre}.ff.w1", caches, rng)
            a = a + p[f"{pre}.ff.b1"]
            caches[f"{pre}.ff"] = a
            g = _gelu(a)
            out = self._linear(g, f"{pre}.ff.w2", caches, rng) + p[f"{pre}.ff.b2"]
            x = x + out.reshape(batch, length, d)

        hidden = x
        hf, caches["ln_f"] = _layer_norm(x, p["ln_f.scale"], p["ln_f.offset"])
        caches["ln_f.out"] = hf
        logits = hf @ p["out.w"]
        return ForwardPass(token_ids=ids, logits=logits, hidden=hidden, caches=caches)

    # backward

    def _linear_backward(self, dy: np.ndarray, name: str, caches: dict, grads: dict) -> np.ndarray:
        x, mask, u = caches[name]
        weight = self.params[name]
        if not self.adapters_active:
            grads[name] = grads.get(name, 0) + x.T @ dy
        dx = dy @ weight.T
        if u is not None:
            adapters = self.adapters
            assert adapters is not None
            a = adapters.tensors[f"{name}.lora_a"]
            b = adapters.tensors[f"{name}.lora_b"]
            grads[f"{name}.lora_b"] = grads.get(f"{name}.lora_b", 0) + adapters.scale * (u.T @ dy)
            du = adapters.scale * (dy @ b.T)
            xa = x * mask if mask is not None else x
            grads[f"{name}.lora_a"] = grads.get(f"{name}.lora_a", 0) + xa.T @ du
            dxa = du @ a.T
            dx = dx + (dxa * mask if mask is not None else dxa)
        return dx

    def backward(
        self, forward: ForwardPass, targets: np.ndarray, weights: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Gradient of ``sum(weights * log p(targets))`` for the trainable tensors.

        Callers pass ``weights = dL/dlog p`` per target position to obtain ``dL/dtheta``.
        """
        caches = forward.caches
        p = self.params
        ids = forward.token_ids
        batch, length = ids.shape
        d = self.config.d_model
        heads = self.config.n_heads
        dh = d // heads
        base = not self.adapters_active
        grads: dict[str, np.ndarray] = {}

        weights = np.asarray(weights, dtype=forward.logits.dtype)
        dlogits = -forward.probs() * weights[..., None]
        np.put_along_axis(
            dlogits,
            targets[..., None],
            np.take_along_axis(dlogits, targets[..., None], axis=-1) + weights[..., None],
            axis=-1,
        )

        hf = caches["ln_f.out"]
        vocab = dlogits.shape[-1]
        if base:
            grads["out.w"] = hf.reshape(-1, d).T @ dlogits.reshape(-1, vocab)
        dhf = dlogits @ p["out.w"].T
        dx, dscale, doffset = _layer_norm_backward(dhf, caches["ln_f"], p["ln_f.scale"])
        if base:
            grads["ln_f.scale"], grads["ln_f.offset"] = dscale, doffset

        for layer in reversed(range(self.config.n_layers)):
            pre = f"layers.{layer}"
            dout = dx.reshape(batch * length, d)
            if base:
                grads[f"{pre}.ff.b2"] = dout.sum(axis=0)
            dg = self._linear_backward(dout, f"{pre}.ff.w2", caches, grads)
            da = dg * _gelu_grad(caches[f"{pre}.ff"])
            if base:
                grads[f"{pre}.ff.b1"] = da.sum(axis=0)
            dff = self._linear_backward(da, f"{pre}.ff.w1", caches, grads)
            dln, dscale, doffset = _layer_norm_backward(
                dff.reshape(batch, length, d), caches[f"{pre}.ln2"], p[f"{pre}.ln2.scale"]
            )
            if base:
                grads[f"{pre}.ln2.scale"], grads[f"{pre}.ln2.offset"] = dscale, doffset
            dx = dx + dln

            q, k, v, att = caches[f"{pre}.attn"]
            dctx = self._linear_backward(
                dx.reshape(batch * length, d), f"{pre}.attn.wo", caches, grads
            )
            dctx = dctx.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3)
            datt = dctx @ v.transpose(0, 1, 3, 2)
            dv = att.transpose(0, 1, 3, 2) @ dctx
            dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) / math.sqrt(dh)
            dq = dscores @ k
            dk = dscores.transpose(0, 1, 3, 2) @ q

            def _merge(t: np.ndarray) -> np.ndarray:
                return t.transpose(0, 2, 1, 3).reshape(batch * length, d)

            dh2d = self._linear_backward(_merge(dq), f"{pre}.attn.wq", caches, grads)
            dh2d = dh2d + self._linear_backward(_merge(dk), f"{pre}.attn.wk", caches, grads)
            dh2d = dh2d + self._linear_backward(_merge(dv), f"{pre}.attn.wv", caches, grads)
            dln, dscale, doffset = _layer_norm_backward(
                dh2d.reshape(batch, length, d), caches[f"{pre}.ln1"], p[f"{pre}.ln1.scale"]
            )
            if base:
                grads[f"{pre}.ln1.scale"], grads[f"{pre}.ln1.offset"] = dscale, doffset
            dx = dx + dln

        if base:
            dtok = np.zeros_like(p["tok_emb"])
            np.add.at(dtok, ids, dx)
            grads["tok_emb"] = dtok
            dpos = np.zeros_like(p["pos_emb"])
            dpos[:length] = dx.sum(axis=0)
            grads["pos_emb"] = dpos

        trainable = self.trainable_parameters()
        result = {
            name: np.asarray(grads.get(name, np.zeros_like(value)))
            for name, value in trainable.items()
        }
        for name, grad in result.items():
            if not np.all(np.isfinite(grad)):
                raise NumericError(f"non-finite gradient for {name}")
            result[name] = grad.astype(trainable[name].dtype, copy=False)
        return result

    # inference helpers

    def next_token_distributions(self, token_ids: Sequence[int]) -> np.ndarray:
        return self.forward(token_ids).probs()[0]

    def sequence_logprob(self, prompt_ids: Sequence[int], answer_ids: Sequence[int]) -> float:
        if len(answer_ids) == 0:
            raise PreconditionError("answer must contain at least one token")
        ids = [*prompt_ids, *answer_ids]
        run = self.forward(ids[:-1])
        targets = np.asarray(ids[1:], dtype=np.int64)[None, :]
        token_lp = run.token_logprobs(targets)[0]
        return float(token_lp[len(prompt_ids) - 1 :].sum())

    def greedy_decode(self, prompt_ids: Sequence[int], max_len: int, eos_id: int) -> list[int]:
        ids = list(prompt_ids)
        answer: list[int] = []
        while len(answer) < max_len and len(ids) < self.config.max_seq_len:
            logits = self.forward(ids).logits[0, -1]
            token = int(np.argmax(logits))
            if token == eos_id:
                break
            answer.append(token)
            ids.append(token)
        return answer

    def hidden_state(self, prompt_ids: Sequence[int]) -> np.ndarray:
        """Final-block residual stream at the last prompt position."""
        return self.forward(prompt_ids).hidden[0, -1].copy()


def forward(model: TransformerLM, token_ids: Sequence[int]) -> np.ndarray:
    return model.next_token_distributions(token_ids)


def sequence_logprob(
    model: TransformerLM, prompt_ids: Sequence[int], answer_ids: Sequence[int]
) -> float:
    return model.sequence_logprob(prompt_ids, answer_ids)

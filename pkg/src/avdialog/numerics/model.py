"""Decoder-only transformer built on the autodiff tensor engine.

Pre-LN blocks, learned absolute positional embeddings, untied input
embedding / output projection so the two can be trained while the body
stays frozen. `transformer_forward` builds the differentiable graph;
`InferenceSession` is a plain-numpy incremental decoder over the same
parameters (same math, KV cached) for generation loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    NumericsError,
    Tensor,
    add,
    dropout,
    embedding_lookup,
    gelu,
    layer_norm,
    log_softmax_last,
    matmul,
    reshape,
    softmax_last,
    take_per_row,
    transpose,
)

NEG_INF = -1.0e30  # additive attention mask value; underflows to exactly 0 after softmax


class VocabularyError(NumericsError):
    """Token id outside the configured vocabulary."""


class SequenceLengthError(NumericsError):
    """Sequence longer than the configured maximum."""


class DegenerateMaskError(NumericsError):
    """Loss mask with no true positions."""


@dataclass
class TransformerConfig:
    n_layers: int = 4
    d_model: int = 256
    n_heads: int = 4
    d_ff: int = 1024
    vocab_size: int = 1024
    max_seq_len: int = 700
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise NumericsError("d_model must be divisible by n_heads")
        if self.max_seq_len < 1 or self.vocab_size < 1:
            raise NumericsError("max_seq_len and vocab_size must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
            "dropout": self.dropout,
        }

    @staticmethod
    def from_dict(d: dict) -> "TransformerConfig":
        return TransformerConfig(**d)


def _body_tensor_names(n_layers: int) -> list[str]:
    names = ["pos"]
    for i in range(n_layers):
        p = f"layers.{i}."
        names += [
            p + "ln1.gain", p + "ln1.bias",
            p + "attn.wq", p + "attn.bq", p + "attn.wk", p + "attn.bk",
            p + "attn.wv", p + "attn.bv", p + "attn.wo", p + "attn.bo",
            p + "ln2.gain", p + "ln2.bias",
            p + "ffn.w1", p + "ffn.b1", p + "ffn.w2", p + "ffn.b2",
        ]
    names += ["ln_f.gain", "ln_f.bias"]
    return names


@dataclass
class TransformerParams:
    """All model weights, partitioned into embedding / body / projection.

    The partition is what stage-1 training freezes against: `embedding`
    and `projection` are single tensors, everything else lives in `body`.
    """

    embedding: Tensor
    projection: Tensor
    body: dict[str, Tensor] = field(default_factory=dict)

    def named(self) -> dict[str, Tensor]:
        """All tensors in a fixed deterministic order."""
        out = {"embedding": self.embedding}
        for name in sorted(self.body):
            out[name] = self.body[name]
        out["projection"] = self.projection
        return out

    def group_of(self, name: str) -> str:
        if name == "embedding":
            return "embedding"
        if name == "projection":
            return "projection"
        return "body"

    def group_names(self, groups: set[str]) -> list[str]:
        return [n for n in self.named() if self.group_of(n) in groups]

    def zero_grads(self):
        for t in self.named().values():
            t.zero_grad()

    @staticmethod
    def init(config: TransformerConfig, seed: int = 0, dtype=np.float32) -> "TransformerParams":
        rng = np.random.default_rng(seed)
        d, v, f = config.d_model, config.vocab_size, config.d_ff

        def w(*shape):
            return Tensor.param((rng.normal(0.0, 0.02, size=shape)).astype(dtype))

        def zeros(*shape):
            return Tensor.param(np.zeros(shape, dtype=dtype))

        def ones(*shape):
            return Tensor.param(np.ones(shape, dtype=dtype))

        body: dict[str, Tensor] = {"pos": w(config.max_seq_len, d)}
        for i in range(config.n_layers):
            p = f"layers.{i}."
            body[p + "ln1.gain"] = ones(d)
            body[p + "ln1.bias"] = zeros(d)
            body[p + "attn.wq"] = w(d, d)
            body[p + "attn.bq"] = zeros(d)
            body[p + "attn.wk"] = w(d, d)
            body[p + "attn.bk"] = zeros(d)
            body[p + "attn.wv"] = w(d, d)
            body[p + "attn.bv"] = zeros(d)
            body[p + "attn.wo"] = w(d, d)
            body[p + "attn.bo"] = zeros(d)
            body[p + "ln2.gain"] = ones(d)
            body[p + "ln2.bias"] = zeros(d)
            body[p + "ffn.w1"] = w(d, f)
            body[p + "ffn.b1"] = zeros(f)
            body[p + "ffn.w2"] = w(f, d)
            body[p + "ffn.b2"] = zeros(d)
        body["ln_f.gain"] = ones(d)
        body["ln_f.bias"] = zeros(d)
        return TransformerParams(embedding=w(v, d), projection=w(d, v), body=body)

    @staticmethod
    def zeros_init(config: TransformerConfig, dtype=np.float32) -> "TransformerParams":
        """Every tensor exactly zero (uniform-logit model)."""
        params = TransformerParams.init(config, seed=0, dtype=dtype)
        for t in params.named().values():
            t.data[...] = 0.0
        return params


def _validate_tokens(tokens, config: TransformerConfig) -> np.ndarray:
    ids = np.asarray(list(tokens), dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise NumericsError("token sequence must be a non-empty 1-D sequence")
    if ids.size > config.max_seq_len:
        raise SequenceLengthError(
            f"sequence length {ids.size} exceeds max_seq_len {config.max_seq_len}"
        )
    if (ids < 0).any() or (ids >= config.vocab_size).any():
        bad = int(ids[(ids < 0) | (ids >= config.vocab_size)][0])
        raise VocabularyError(f"token id {bad} outside vocabulary of size {config.vocab_size}")
    return ids


def transformer_forward(
    tokens,
    params: TransformerParams,
    config: TransformerConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Causal forward pass; returns logits of shape (len(tokens), vocab_size).

    Dropout is applied only when train=True with an explicit rng, so
    evaluation is deterministic by construction.
    """
    ids = _validate_tokens(tokens, config)
    T, H, dh = ids.size, config.n_heads, config.head_dim
    p_drop = config.dropout if train else 0.0
    if p_drop > 0.0 and rng is None:
        raise NumericsError("training forward with dropout requires an rng")

    x = add(embedding_lookup(params.embedding, ids),
            embedding_lookup(params.body["pos"], np.arange(T)))
    if p_drop > 0.0:
        x = dropout(x, p_drop, rng)

    causal = np.triu(np.full((T, T), NEG_INF, dtype=x.data.dtype), k=1)
    causal_t = Tensor.const(causal)
    scale = 1.0 / math.sqrt(dh)

    for i in range(config.n_layers):
        b = params.body
        p = f"layers.{i}."
        h = layer_norm(x, b[p + "ln1.gain"], b[p + "ln1.bias"])
        q = add(matmul(h, b[p + "attn.wq"]), b[p + "attn.bq"])
        k = add(matmul(h, b[p + "attn.wk"]), b[p + "attn.bk"])
        v = add(matmul(h, b[p + "attn.wv"]), b[p + "attn.bv"])
        # (T, d) -> (H, T, dh)
        q = transpose(reshape(q, (T, H, dh)), (1, 0, 2))
        k = transpose(reshape(k, (T, H, dh)), (1, 0, 2))
        v = transpose(reshape(v, (T, H, dh)), (1, 0, 2))
        scores = add(mul_scalar(matmul(q, transpose(k, (0, 2, 1))), scale), causal_t)
        att = softmax_last(scores)
        ctx = matmul(att, v)  # (H, T, dh)
        ctx = reshape(transpose(ctx, (1, 0, 2)), (T, H * dh))
        proj = add(matmul(ctx, b[p + "attn.wo"]), b[p + "attn.bo"])
        if p_drop > 0.0:
            proj = dropout(proj, p_drop, rng)
        x = add(x, proj)

        h = layer_norm(x, b[p + "ln2.gain"], b[p + "ln2.bias"])
        h = gelu(add(matmul(h, b[p + "ffn.w1"]), b[p + "ffn.b1"]))
        h = add(matmul(h, b[p + "ffn.w2"]), b[p + "ffn.b2"])
        if p_drop > 0.0:
            h = dropout(h, p_drop, rng)
        x = add(x, h)

    x = layer_norm(x, params.body["ln_f.gain"], params.body["ln_f.bias"])
    logits = matmul(x, params.projection)
    return logits


def mul_scalar(a: Tensor, s: float) -> Tensor:
    return a * Tensor.const(np.asarray(s, dtype=a.data.dtype))


def masked_nll(logits: Tensor, targets, mask) -> Tensor:
    """Mean negative log-likelihood over masked positions.

    logits (N, V); targets length-N int ids; mask length-N booleans with
    at least one true position.
    """
    targets = np.asarray(list(targets), dtype=np.int64)
    mask = np.asarray(list(mask), dtype=bool)
    n = logits.data.shape[0]
    if n < 1:
        raise NumericsError("masked_nll needs at least one position")
    if targets.shape != (n,) or mask.shape != (n,):
        raise NumericsError("targets/mask length must match logits rows")
    count = int(mask.sum())
    if count == 0:
        raise DegenerateMaskError("loss mask has no true positions")
    if (targets < 0).any() or (targets >= logits.data.shape[1]).any():
        raise VocabularyError("target id outside logits vocabulary")
    logp = log_softmax_last(logits)
    picked = take_per_row(logp, targets)
    weights = Tensor.const((mask.astype(logits.data.dtype)) * (-1.0 / count))
    return (picked * weights).sum()


class InferenceSession:
    """Incremental greedy/sampling decoder with per-layer KV caches.

    Runs the same arithmetic as `transformer_forward` on raw numpy; used
    for generation where rebuilding the autodiff graph per step would be
    wasteful. `logits_all` exposes the full-sequence non-incremental path.
    """

    def __init__(self, params: TransformerParams, config: TransformerConfig):
        self.params = params
        self.config = config
        self._len = 0
        d = config.d_model
        self._k = [np.zeros((config.n_heads, 0, config.head_dim), dtype=params.embedding.data.dtype)
                   for _ in range(config.n_layers)]
        self._v = [np.zeros((config.n_heads, 0, config.head_dim), dtype=params.embedding.data.dtype)
                   for _ in range(config.n_layers)]

    @property
    def length(self) -> int:
        return self._len

    def _ln(self, x, gain, bias, eps=1e-5):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return (xc / np.sqrt(var + eps)) * gain + bias

    def _gelu(self, x):
        c = math.sqrt(2.0 / math.pi)
        return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))

    def append(self, token_id: int) -> np.ndarray:
        """Feed one token; returns the logits row for the new position."""
        cfg = self.config
        if self._len >= cfg.max_seq_len:
            raise SequenceLengthError("inference session exceeded max_seq_len")
        if not (0 <= token_id < cfg.vocab_size):
            raise VocabularyError(f"token id {token_id} outside vocabulary")
        b = {k: t.data for k, t in self.params.body.items()}
        pos = self._len
        H, dh = cfg.n_heads, cfg.head_dim
        x = self.params.embedding.data[token_id] + b["pos"][pos]
        scale = 1.0 / math.sqrt(dh)
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            h = self._ln(x, b[p + "ln1.gain"], b[p + "ln1.bias"])
            q = (h @ b[p + "attn.wq"] + b[p + "attn.bq"]).reshape(H, 1, dh)
            k = (h @ b[p + "attn.wk"] + b[p + "attn.bk"]).reshape(H, 1, dh)
            v = (h @ b[p + "attn.wv"] + b[p + "attn.bv"]).reshape(H, 1, dh)
            self._k[i] = np.concatenate([self._k[i], k], axis=1)
            self._v[i] = np.concatenate([self._v[i], v], axis=1)
            scores = (q @ np.swapaxes(self._k[i], -1, -2)) * scale  # (H, 1, t+1)
            m = scores.max(axis=-1, keepdims=True)
            e = np.exp(scores - m)
            att = e / e.sum(axis=-1, keepdims=True)
            ctx = (att @ self._v[i]).reshape(H * dh)
            x = x + (ctx @ b[p + "attn.wo"] + b[p + "attn.bo"])
            h = self._ln(x, b[p + "ln2.gain"], b[p + "ln2.bias"])
            h = self._gelu(h @ b[p + "ffn.w1"] + b[p + "ffn.b1"])
            x = x + (h @ b[p + "ffn.w2"] + b[p + "ffn.b2"])
        x = self._ln(x, b["ln_f.gain"], b["ln_f.bias"])
        self._len += 1
        return x @ self.params.projection.data

    def prefill(self, tokens) -> np.ndarray:
        """Feed a sequence; returns the logits row after the last token."""
        logits = None
        for t in tokens:
            logits = self.append(int(t))
        if logits is None:
            raise NumericsError("prefill requires at least one token")
        return logits


def logits_no_grad(tokens, params: TransformerParams, config: TransformerConfig) -> np.ndarray:
    """Full-sequence forward without graph construction; (T, V) ndarray."""
    from .tensor import no_grad

    with no_grad():
        return transformer_forward(tokens, params, config).data

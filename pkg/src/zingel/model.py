"""Forward passes for the self-attentive biGRU scorer.

The network maps a fixed-length encoded tweet through an embedding lookup,
a bidirectional GRU, token-level self-attention and a 4-way softmax head
that predicts the annotation distribution.  Everything is dense numpy; the
training path runs in float32 and the gradient-checking path in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import AllMaskedError, DomainError, ShapeMismatchError
from .text import EncodedTweet

#: Number of annotation bins in the output head.
NUM_CLASSES = 4


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class ModelConfig:
    embed_dim: int
    hidden_dim: int
    seq_len: int


_GATE_FIELDS = (
    "w_update",
    "w_reset",
    "w_cand",
    "u_update",
    "u_reset",
    "u_cand",
    "b_update",
    "b_reset",
    "b_cand",
)


@dataclass
class GruDirection:
    """Weights for one direction: input (w_*), recurrent (u_*) and bias (b_*)
    tensors for the update gate, reset gate and candidate state."""

    w_update: np.ndarray  # (hidden, input)
    w_reset: np.ndarray
    w_cand: np.ndarray
    u_update: np.ndarray  # (hidden, hidden)
    u_reset: np.ndarray
    u_cand: np.ndarray
    b_update: np.ndarray  # (hidden,)
    b_reset: np.ndarray
    b_cand: np.ndarray

    def named(self, prefix: str):
        for name in _GATE_FIELDS:
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class GruParams:
    fwd: GruDirection  # runs left to right
    bwd: GruDirection  # runs right to left


@dataclass
class AttentionParams:
    proj: np.ndarray  # (2*hidden, 2*hidden)
    score: np.ndarray  # (2*hidden,)


@dataclass
class OutputParams:
    weight: np.ndarray  # (NUM_CLASSES, 2*hidden)
    bias: np.ndarray  # (NUM_CLASSES,)


def _named_tree(embedding, gru, attention, output):
    yield "embedding", embedding
    yield from gru.fwd.named("gru.fwd")
    yield from gru.bwd.named("gru.bwd")
    yield "attention.proj", attention.proj
    yield "attention.score", attention.score
    yield "output.weight", output.weight
    yield "output.bias", output.bias


def _copy_tree(source, transform):
    def copy_dir(d):
        return GruDirection(**{f.name: transform(getattr(d, f.name)) for f in fields(GruDirection)})

    return (
        transform(source.embedding),
        GruParams(fwd=copy_dir(source.gru.fwd), bwd=copy_dir(source.gru.bwd)),
        AttentionParams(proj=transform(source.attention.proj), score=transform(source.attention.score)),
        OutputParams(weight=transform(source.output.weight), bias=transform(source.output.bias)),
    )


@dataclass
class ModelParams:
    """Every trainable tensor plus the dimensions they must agree on."""

    embedding: np.ndarray  # (vocab, embed_dim); row 0 is padding and stays zero
    gru: GruParams
    attention: AttentionParams
    output: OutputParams
    config: ModelConfig

    def named_tensors(self):
        """(name, array) pairs in the fixed serialization order."""
        yield from _named_tree(self.embedding, self.gru, self.attention, self.output)

    def copy(self) -> "ModelParams":
        emb, gru, att, out = _copy_tree(self, np.copy)
        return ModelParams(emb, gru, att, out, ModelConfig(**vars(self.config)))

    def astype(self, dtype) -> "ModelParams":
        emb, gru, att, out = _copy_tree(self, lambda a: a.astype(dtype))
        return ModelParams(emb, gru, att, out, ModelConfig(**vars(self.config)))

    def validate_shapes(self) -> None:
        d0, d1, two_d1 = self.config.embed_dim, self.config.hidden_dim, 2 * self.config.hidden_dim
        if self.embedding.ndim != 2 or self.embedding.shape[1] != d0:
            raise ShapeMismatchError(f"embedding shape {self.embedding.shape} incompatible with dim {d0}")
        for direction in (self.gru.fwd, self.gru.bwd):
            for name, arr in direction.named("gru"):
                kind = name.split(".")[-1][0]
                expected = {"w": (d1, d0), "u": (d1, d1), "b": (d1,)}[kind]
                if arr.shape != expected:
                    raise ShapeMismatchError(f"{name} has shape {arr.shape}, expected {expected}")
        if self.attention.proj.shape != (two_d1, two_d1) or self.attention.score.shape != (two_d1,):
            raise ShapeMismatchError("attention tensor shapes inconsistent with hidden dim")
        if self.output.weight.shape != (NUM_CLASSES, two_d1) or self.output.bias.shape != (NUM_CLASSES,):
            raise ShapeMismatchError("output tensor shapes inconsistent with hidden dim")


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def init_params(embedding: np.ndarray, hidden_dim: int, seq_len: int, rng: np.random.Generator) -> ModelParams:
    """Build parameters around a prepared embedding matrix.

    Weight matrices draw from the scaled uniform range
    sqrt(6 / (fan_in + fan_out)); biases start at zero.  Tensors are created
    in serialization order so a seeded generator reproduces the model.
    """
    dtype = embedding.dtype
    d0 = embedding.shape[1]
    d1 = hidden_dim

    def direction() -> GruDirection:
        return GruDirection(
            w_update=_glorot(rng, (d1, d0), dtype),
            w_reset=_glorot(rng, (d1, d0), dtype),
            w_cand=_glorot(rng, (d1, d0), dtype),
            u_update=_glorot(rng, (d1, d1), dtype),
            u_reset=_glorot(rng, (d1, d1), dtype),
            u_cand=_glorot(rng, (d1, d1), dtype),
            b_update=np.zeros(d1, dtype=dtype),
            b_reset=np.zeros(d1, dtype=dtype),
            b_cand=np.zeros(d1, dtype=dtype),
        )

    params = ModelParams(
        embedding=embedding,
        gru=GruParams(fwd=direction(), bwd=direction()),
        attention=AttentionParams(
            proj=_glorot(rng, (2 * d1, 2 * d1), dtype),
            score=_glorot(rng, (2 * d1,), dtype),
        ),
        output=OutputParams(
            weight=_glorot(rng, (NUM_CLASSES, 2 * d1), dtype),
            bias=np.zeros(NUM_CLASSES, dtype=dtype),
        ),
        config=ModelConfig(embed_dim=d0, hidden_dim=d1, seq_len=seq_len),
    )
    params.validate_shapes()
    return params


def true_length(mask: np.ndarray) -> int:
    """Number of leading ones in the mask; rejects non-prefix masks."""
    length = int(mask.sum())
    if not mask[:length].all() or mask[length:].any():
        raise ShapeMismatchError("mask must be a prefix of ones followed by zeros")
    return length


def gru_cell(x: np.ndarray, h_prev: np.ndarray, direction: GruDirection) -> np.ndarray:
    """One recurrence step.

    update gate   z = sigmoid(Wu x + Uu h + bu)
    reset gate    r = sigmoid(Wr x + Ur h + br)
    candidate     c = tanh(Wc x + Uc (r * h) + bc)
    new state     h = (1 - z) * h_prev + z * c
    """
    if x.shape != (direction.w_update.shape[1],) or h_prev.shape != (direction.u_update.shape[1],):
        raise ShapeMismatchError(
            f"gru_cell got x{x.shape}, h{h_prev.shape} for weights "
            f"{direction.w_update.shape}/{direction.u_update.shape}"
        )
    z = _sigmoid(direction.w_update @ x + direction.u_update @ h_prev + direction.b_update)
    r = _sigmoid(direction.w_reset @ x + direction.u_reset @ h_prev + direction.b_reset)
    c = np.tanh(direction.w_cand @ x + direction.u_cand @ (r * h_prev) + direction.b_cand)
    return (1.0 - z) * h_prev + z * c


def bigru_forward(x_seq: np.ndarray, mask: np.ndarray, params: GruParams) -> np.ndarray:
    """Run both directions over the unpadded prefix and concatenate states.

    Rows at masked positions stay zero and the recurrences never consume
    padded inputs, so the result does not depend on the padded length.
    """
    n = x_seq.shape[0]
    if mask.shape != (n,):
        raise ShapeMismatchError("mask length must match the input sequence")
    d1 = params.fwd.u_update.shape[0]
    length = true_length(mask)
    out = np.zeros((n, 2 * d1), dtype=x_seq.dtype)
    h = np.zeros(d1, dtype=x_seq.dtype)
    for t in range(length):
        h = gru_cell(x_seq[t], h, params.fwd)
        out[t, :d1] = h
    h = np.zeros(d1, dtype=x_seq.dtype)
    for t in range(length - 1, -1, -1):
        h = gru_cell(x_seq[t], h, params.bwd)
        out[t, d1:] = h
    return out


def attention_forward(
    hidden: np.ndarray, mask: np.ndarray, params: AttentionParams
) -> tuple[np.ndarray, np.ndarray]:
    """Token-level self-attention pooling.

    Scores are tanh(H W) . v per row; padded positions are excluded before
    the softmax, so their weights are exactly zero and the rest sum to one.
    Returns (weights, pooled vector).
    """
    n, width = hidden.shape
    if params.proj.shape != (width, width) or params.score.shape != (width,):
        raise ShapeMismatchError("attention parameter shapes do not match the hidden width")
    length = true_length(mask)
    if length == 0:
        raise AllMaskedError("attention needs at least one unmasked position")
    valid = hidden[:length]
    scores = np.tanh(valid @ params.proj) @ params.score
    alpha = np.zeros(n, dtype=hidden.dtype)
    alpha[:length] = _softmax(scores)
    pooled = valid.T @ alpha[:length]
    return alpha, pooled


def output_forward(pooled: np.ndarray, params: OutputParams) -> np.ndarray:
    """Softmax head over the annotation bins."""
    if pooled.shape != (params.weight.shape[1],):
        raise ShapeMismatchError("pooled vector width does not match the output weight")
    return _softmax(params.weight @ pooled + params.bias)


def cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    """Soft-label cross-entropy  -sum_i q_i ln p_i  (q is the target)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeMismatchError("distributions must have the same length")
    if np.any(p <= 0.0):
        raise DomainError("predicted distribution has a non-positive entry")
    return float(-(q * np.log(p)).sum())


def cross_entropy_from_logits(logits: np.ndarray, q: np.ndarray) -> float:
    """Same loss computed stably from logits via log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) + m - (q * logits).sum())


@dataclass
class DropoutRates:
    """Inverted-dropout rates at the three published placements."""

    embedding: float = 0.2
    encoder: float = 0.3
    attention_out: float = 0.5

    def __post_init__(self):
        for name in ("embedding", "encoder", "attention_out"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate {name}={rate} must be in [0, 1)")


NO_DROPOUT = DropoutRates(0.0, 0.0, 0.0)


def _dropout_mask(rng, shape, rate, dtype):
    if rate == 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1.0 - rate)


@dataclass
class GruDirectionCache:
    positions: np.ndarray  # visit order of the recurrence
    update: np.ndarray  # (length, hidden) gate values, one row per step
    reset: np.ndarray
    cand: np.ndarray
    prev: np.ndarray  # state consumed at each step (step 0 consumes zeros)


@dataclass
class ForwardCache:
    """Intermediate activations needed by the backward pass."""

    indices: np.ndarray
    mask: np.ndarray
    length: int
    x: np.ndarray  # embedded inputs after dropout
    emb_mask: np.ndarray | None
    fwd: GruDirectionCache
    bwd: GruDirectionCache
    hidden_raw: np.ndarray
    enc_mask: np.ndarray | None
    hidden: np.ndarray
    attn_tanh: np.ndarray  # tanh(H proj) rows for the unpadded prefix
    alpha: np.ndarray
    pooled_raw: np.ndarray
    attn_out_mask: np.ndarray | None
    pooled: np.ndarray
    logits: np.ndarray
    p: np.ndarray
    embedding_shape: tuple[int, int]


class ForwardResult(NamedTuple):
    p: np.ndarray
    alpha: np.ndarray
    cache: ForwardCache | None


def _gru_direction_with_cache(x_seq, positions, direction, dtype):
    d1 = direction.u_update.shape[0]
    steps = len(positions)
    cache = GruDirectionCache(
        positions=np.asarray(positions, dtype=np.int64),
        update=np.zeros((steps, d1), dtype=dtype),
        reset=np.zeros((steps, d1), dtype=dtype),
        cand=np.zeros((steps, d1), dtype=dtype),
        prev=np.zeros((steps, d1), dtype=dtype),
    )
    states = np.zeros((steps, d1), dtype=dtype)
    h = np.zeros(d1, dtype=dtype)
    for k, pos in enumerate(positions):
        x = x_seq[pos]
        z = _sigmoid(direction.w_update @ x + direction.u_update @ h + direction.b_update)
        r = _sigmoid(direction.w_reset @ x + direction.u_reset @ h + direction.b_reset)
        c = np.tanh(direction.w_cand @ x + direction.u_cand @ (r * h) + direction.b_cand)
        cache.update[k] = z
        cache.reset[k] = r
        cache.cand[k] = c
        cache.prev[k] = h
        h = (1.0 - z) * h + z * c
        states[k] = h
    return states, cache


def model_forward(
    encoded: EncodedTweet,
    params: ModelParams,
    mode: str = "infer",
    rates: DropoutRates | None = None,
    rng: np.random.Generator | None = None,
) -> ForwardResult:
    """Full forward pass: embeddings -> biGRU -> attention -> softmax head.

    In train mode inverted dropout is applied after the embedding lookup,
    on the biGRU states and on the pooled vector, and a cache of every
    intermediate is returned for the backward pass.  In infer mode dropout
    is the identity and no cache is built.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = params.config
    n = cfg.seq_len
    if encoded.indices.shape != (n,) or encoded.mask.shape != (n,):
        raise ShapeMismatchError(
            f"encoded tweet has length {encoded.indices.shape}, model expects {n}"
        )
    train = mode == "train"
    if train:
        rates = rates if rates is not None else DropoutRates()
        needs_rng = rates.embedding > 0 or rates.encoder > 0 or rates.attention_out > 0
        if needs_rng and rng is None:
            raise ValueError("train mode with nonzero dropout rates needs a generator")
    dtype = params.embedding.dtype
    length = true_length(encoded.mask)
    if length == 0:
        raise AllMaskedError("cannot run the model on an all-padding sequence")

    x = params.embedding[encoded.indices].astype(dtype, copy=True)
    emb_mask = _dropout_mask(rng, x.shape, rates.embedding, dtype) if train else None
    if emb_mask is not None:
        x *= emb_mask

    d1 = cfg.hidden_dim
    fwd_states, fwd_cache = _gru_direction_with_cache(x, range(length), params.gru.fwd, dtype)
    bwd_states, bwd_cache = _gru_direction_with_cache(
        x, range(length - 1, -1, -1), params.gru.bwd, dtype
    )
    hidden_raw = np.zeros((n, 2 * d1), dtype=dtype)
    hidden_raw[:length, :d1] = fwd_states
    hidden_raw[bwd_cache.positions, d1:] = bwd_states

    enc_mask = _dropout_mask(rng, hidden_raw.shape, rates.encoder, dtype) if train else None
    hidden = hidden_raw * enc_mask if enc_mask is not None else hidden_raw

    valid = hidden[:length]
    attn_tanh = np.tanh(valid @ params.attention.proj)
    scores = attn_tanh @ params.attention.score
    alpha = np.zeros(n, dtype=dtype)
    alpha[:length] = _softmax(scores)
    pooled_raw = valid.T @ alpha[:length]

    attn_out_mask = (
        _dropout_mask(rng, pooled_raw.shape, rates.attention_out, dtype) if train else None
    )
    pooled = pooled_raw * attn_out_mask if attn_out_mask is not None else pooled_raw

    logits = params.output.weight @ pooled + params.output.bias
    p = _softmax(logits)

    cache = None
    if train:
        cache = ForwardCache(
            indices=encoded.indices,
            mask=encoded.mask,
            length=length,
            x=x,
            emb_mask=emb_mask,
            fwd=fwd_cache,
            bwd=bwd_cache,
            hidden_raw=hidden_raw,
            enc_mask=enc_mask,
            hidden=hidden,
            attn_tanh=attn_tanh,
            alpha=alpha,
            pooled_raw=pooled_raw,
            attn_out_mask=attn_out_mask,
            pooled=pooled,
            logits=logits,
            p=p,
            embedding_shape=params.embedding.shape,
        )
    return ForwardResult(p=p, alpha=alpha, cache=cache)

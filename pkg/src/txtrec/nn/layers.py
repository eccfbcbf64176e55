"""Neural building blocks for the sequence and context encoders.

All layers accept either a single example (``[L, d]`` inputs, ``[L]`` masks)
or a batch (``[B, L, d]`` inputs, ``[B, L]`` masks) and return the matching
rank. A padding mask is a boolean array with True at real item positions.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from txtrec.errors import ContractError, DimensionError, SequenceLengthError
from txtrec.tensor import ops
from txtrec.tensor.core import Tensor

# Score given to padded key positions before the softmax. Large enough that
# exp() underflows to zero, small enough to stay finite in float32.
MASK_VALUE = -1e9

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class AttentionParams:
    """Projection matrices of one multi-head self-attention layer."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int

    def __post_init__(self) -> None:
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            shape = getattr(self, name).shape
            if shape != (d, d):
                raise DimensionError(f"Attention {name} must be {(d, d)}, got {shape}")
        if self.heads < 1 or d % self.heads != 0:
            raise DimensionError(f"Model dimension {d} is not divisible by {self.heads} heads")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str, heads: int) -> AttentionParams:
        return cls(
            w_q=params[f"{prefix}.w_q"],
            w_k=params[f"{prefix}.w_k"],
            w_v=params[f"{prefix}.w_v"],
            w_o=params[f"{prefix}.w_o"],
            heads=heads,
        )


@dataclass(frozen=True)
class FeedForwardParams:
    """Weights of the point-wise two-layer feed-forward network."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __post_init__(self) -> None:
        d, d_ff = self.w1.shape
        expected = {"b1": (d_ff,), "w2": (d_ff, d), "b2": (d,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"Feed-forward {name} must be {shape}, got {getattr(self, name).shape}"
                )

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> FeedForwardParams:
        return cls(
            w1=params[f"{prefix}.w1"],
            b1=params[f"{prefix}.b1"],
            w2=params[f"{prefix}.w2"],
            b2=params[f"{prefix}.b2"],
        )


@dataclass(frozen=True)
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> LayerNormParams:
        return cls(gain=params[f"{prefix}.gain"], bias=params[f"{prefix}.bias"])


@dataclass(frozen=True)
class EncoderBlockParams:
    """One post-norm Transformer encoder block."""

    attention: AttentionParams
    norm1: LayerNormParams
    ffn: FeedForwardParams
    norm2: LayerNormParams

    @classmethod
    def from_params(
        cls, params: Mapping[str, Tensor], prefix: str, heads: int
    ) -> EncoderBlockParams:
        return cls(
            attention=AttentionParams.from_params(params, f"{prefix}.attention", heads),
            norm1=LayerNormParams.from_params(params, f"{prefix}.norm1"),
            ffn=FeedForwardParams.from_params(params, f"{prefix}.ffn"),
            norm2=LayerNormParams.from_params(params, f"{prefix}.norm2"),
        )


def block_param_shapes(prefix: str, d: int, d_ff: int) -> dict[str, tuple[int, ...]]:
    """Names and shapes of the arrays of one encoder block."""
    shapes: dict[str, tuple[int, ...]] = {}
    for name in ("w_q", "w_k", "w_v", "w_o"):
        shapes[f"{prefix}.attention.{name}"] = (d, d)
    shapes[f"{prefix}.norm1.gain"] = (d,)
    shapes[f"{prefix}.norm1.bias"] = (d,)
    shapes[f"{prefix}.ffn.w1"] = (d, d_ff)
    shapes[f"{prefix}.ffn.b1"] = (d_ff,)
    shapes[f"{prefix}.ffn.w2"] = (d_ff, d)
    shapes[f"{prefix}.ffn.b2"] = (d,)
    shapes[f"{prefix}.norm2.gain"] = (d,)
    shapes[f"{prefix}.norm2.bias"] = (d,)
    return shapes


def padding_mask(lengths: np.ndarray | list[int], seq_len: int) -> np.ndarray:
    """Build contiguous-prefix masks: row i has ``lengths[i]`` leading True values."""
    lengths = np.asarray(lengths, dtype=np.int64)
    return np.arange(seq_len)[None, :] < lengths[:, None]


def validate_padding_mask(mask: np.ndarray) -> None:
    """Check that every row has a real position and real positions form a prefix.

    Raises:
        ContractError: If a row is all padding or has a gap.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    counts = mask.sum(axis=-1)
    if (counts == 0).any():
        raise ContractError("Padding mask has a row with no real positions")
    expected = padding_mask(counts, mask.shape[-1])
    if not np.array_equal(mask, expected):
        raise ContractError("Real positions in a padding mask must form a contiguous prefix")


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return ops.reshape(x, (1, *x.shape)), True
    if x.ndim != 3:
        raise DimensionError(f"Expected [L, d] or [B, L, d] input, got shape {x.shape}")
    return x, False


def _batched_mask(mask: np.ndarray | None, batch: int, length: int) -> np.ndarray | None:
    if mask is None:
        return None
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 1:
        m = m[None, :]
    if m.shape != (batch, length):
        raise ContractError(
            f"Mask shape {tuple(np.shape(mask))} does not match input {(batch, length)}"
        )
    return m


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of an embedding table; output shape is ``ids.shape + [d]``.

    Raises:
        VocabularyError: If an id is outside the table.
    """
    return ops.gather_rows(table, ids)


def add_positional(x: Tensor, pos_table: Tensor) -> Tensor:
    """Add learned position rows ``pos_table[0..L)`` to ``x``.

    Raises:
        SequenceLengthError: If L exceeds the table length.
    """
    length = x.shape[-2]
    if length > pos_table.shape[0]:
        raise SequenceLengthError(
            f"Sequence length {length} exceeds the maximum {pos_table.shape[0]}"
        )
    positions = ops.gather_rows(pos_table, np.arange(length))
    return x + positions


def _split_heads(t: Tensor, heads: int) -> Tensor:
    b, length, d = t.shape
    return ops.transpose(ops.reshape(t, (b, length, heads, d // heads)), (0, 2, 1, 3))


def _attend(x: Tensor, p: AttentionParams, mask: np.ndarray | None) -> tuple[Tensor, Tensor]:
    """Return post-softmax weights ``[B, h, L, L]`` and split values ``[B, h, L, d_k]``."""
    b, length, d = x.shape
    if d != p.d_model:
        raise DimensionError(f"Input width {d} does not match attention width {p.d_model}")
    q = _split_heads(ops.matmul(x, p.w_q), p.heads)
    k = _split_heads(ops.matmul(x, p.w_k), p.heads)
    v = _split_heads(ops.matmul(x, p.w_v), p.heads)
    scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) / math.sqrt(p.d_k)
    m = _batched_mask(mask, b, length)
    if m is not None:
        # mask KEY positions only; padded query rows are dropped later by pooling
        scores = ops.where(m[:, None, None, :], scores, MASK_VALUE)
    return ops.softmax_lastdim(scores), v


def attention_weights(x: Tensor, p: AttentionParams, mask: np.ndarray | None = None) -> Tensor:
    """Post-softmax attention weights, ``[h, L, L]`` or ``[B, h, L, L]``."""
    xb, single = _batched(x)
    weights, _ = _attend(xb, p, mask)
    if single:
        return ops.reshape(weights, weights.shape[1:])
    return weights


def multi_head_self_attention(
    x: Tensor, p: AttentionParams, mask: np.ndarray | None = None
) -> Tensor:
    """Concat(head_1..head_h) W_O with head_i = softmax(Q_i K_i^T / sqrt(d_k)) V_i.

    Raises:
        ContractError: If the mask does not match the input length.
    """
    xb, single = _batched(x)
    b, length, d = xb.shape
    weights, v = _attend(xb, p, mask)
    heads = ops.matmul(weights, v)
    merged = ops.reshape(ops.transpose(heads, (0, 2, 1, 3)), (b, length, d))
    out = ops.matmul(merged, p.w_o)
    if single:
        return ops.reshape(out, (length, d))
    return out


def feed_forward(x: Tensor, p: FeedForwardParams, slope: float = 0.01) -> Tensor:
    """Point-wise ``leaky_relu(x W1 + b1) W2 + b2``."""
    hidden = ops.leaky_relu(ops.matmul(x, p.w1) + p.b1, slope)
    return ops.matmul(hidden, p.w2) + p.b2


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row to zero mean and unit variance, then scale and shift."""
    if x.shape[-1] < 2:
        raise ContractError(f"layer_norm needs at least 2 features, got {x.shape[-1]}")
    mu = ops.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ops.mean(centered * centered, axis=-1, keepdims=True)
    return centered / ops.sqrt(var + eps) * gain + bias


def encoder_block(
    x: Tensor,
    p: EncoderBlockParams,
    mask: np.ndarray | None = None,
    slope: float = 0.01,
    bypass: bool = False,
) -> Tensor:
    """x -> MHSA -> add -> norm -> FFN -> add -> norm.

    With ``bypass`` the block returns ``x`` unchanged (used to test pooling
    and crossing stages in isolation).
    """
    if bypass:
        return x
    h = layer_norm(x + multi_head_self_attention(x, p.attention, mask), p.norm1.gain, p.norm1.bias)
    return layer_norm(h + feed_forward(h, p.ffn, slope), p.norm2.gain, p.norm2.bias)


def mean_max_pool(z: Tensor, mask: np.ndarray) -> Tensor:
    """Concat(alpha, beta): mean and max over the real rows of ``z``.

    Returns ``[2d]`` for a single example or ``[B, 2d]`` for a batch.

    Raises:
        ContractError: If a mask row has no real positions.
    """
    zb, single = _batched(z)
    b, length, _ = zb.shape
    m = _batched_mask(mask, b, length)
    assert m is not None
    counts = m.sum(axis=-1)
    if (counts == 0).any():
        raise ContractError("mean_max_pool needs at least one real position per example")
    keep = m[:, :, None]
    alpha = ops.sum(ops.where(keep, zb, 0.0), axis=1) / Tensor(counts[:, None])
    beta = ops.max(ops.where(keep, zb, MASK_VALUE), axis=1)
    pooled = ops.concat([alpha, beta], axis=-1)
    if single:
        return ops.reshape(pooled, (pooled.shape[-1],))
    return pooled

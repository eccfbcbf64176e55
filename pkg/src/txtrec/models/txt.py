"""Transformer Cross Transformer (TxT) recommender.

Two Transformer encoders run side by side: one over the basket prefix
(item embeddings plus learned positions, padding masked), one over the
context fields (one token per field, no positions, no mask). Each encoder
output is mean-max pooled, the two pooled vectors are crossed by an
element-wise product followed by a leaky ReLU, and a dense head maps the
result to logits over the item vocabulary.

Every function accepts either one example or a batch and returns the
matching rank.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from txtrec.errors import DimensionError, SequenceLengthError
from txtrec.models.base import BaseModel, Batch, ParamSpec, as_tensors, init_kind
from txtrec.models.config import TxTConfig
from txtrec.nn.layers import (
    AttentionParams,
    EncoderBlockParams,
    add_positional,
    attention_weights,
    block_param_shapes,
    embedding_lookup,
    encoder_block,
    mean_max_pool,
)
from txtrec.nn.losses import cross_entropy_loss
from txtrec.tensor import ops
from txtrec.tensor.core import Tensor

ParamsLike = Mapping[str, np.ndarray | Tensor]

__all__ = [
    "AttentionDump",
    "TxTModel",
    "attention_weight_dump",
    "cross_entropy_loss",
    "encode_context",
    "encode_sequence",
    "forward",
    "latent_cross_combine",
]


def _unsqueeze_ids(ids: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        return ids[None, :], True
    if ids.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {ids.shape}")
    return ids, False


def _squeeze(t: Tensor, single: bool) -> Tensor:
    if single:
        return ops.reshape(t, t.shape[1:])
    return t


def encode_sequence(
    item_ids: np.ndarray, mask: np.ndarray, params: ParamsLike, config: TxTConfig
) -> Tensor:
    """Encode a padded basket prefix into a ``2d`` summary vector.

    Args:
        item_ids: ``[L]`` or ``[B, L]`` item ids, PAD after the real items.
        mask: Boolean padding mask of the same shape.
        params: Model parameters (arrays or tensors).
        config: Model hyperparameters.

    Returns:
        ``[2d]`` or ``[B, 2d]`` pooled encoding.

    Raises:
        SequenceLengthError: If L exceeds the configured sequence length.
        VocabularyError: If an item id is outside the vocabulary.
        ContractError: If a mask row has no real positions.
    """
    p = as_tensors(params)
    ids, single = _unsqueeze_ids(item_ids, "item_ids")
    if ids.shape[1] > config.seq_len:
        raise SequenceLengthError(
            f"Sequence length {ids.shape[1]} exceeds the maximum {config.seq_len}"
        )
    m = np.asarray(mask, dtype=bool)
    if single:
        m = m[None, :] if m.ndim == 1 else m
    x = add_positional(embedding_lookup(p["item_embedding"], ids), p["position_table"])
    for i in range(config.seq_layers):
        block = EncoderBlockParams.from_params(p, f"seq_encoder.{i}", config.seq_heads)
        x = encoder_block(x, block, m, config.ffn_slope, config.bypass_encoders)
    return _squeeze(mean_max_pool(x, m), single)


def _context_tokens(ctx: np.ndarray, p: Mapping[str, Tensor], config: TxTConfig) -> Tensor:
    """Stack one embedding row per context field into ``[B, m, d]``."""
    rows = [
        embedding_lookup(p[f"context_embedding.{f.name}"], ctx[:, j])
        for j, f in enumerate(config.context_fields)
    ]
    return ops.stack(rows, axis=1)


def _check_context(ctx_ids: np.ndarray, config: TxTConfig) -> tuple[np.ndarray, bool]:
    ctx, single = _unsqueeze_ids(ctx_ids, "context")
    if ctx.shape[1] != len(config.context_fields):
        raise DimensionError(
            f"Context has {ctx.shape[1]} fields, model expects {len(config.context_fields)}"
        )
    return ctx, single


def encode_context(ctx_ids: np.ndarray, params: ParamsLike, config: TxTConfig) -> Tensor:
    """Encode the context fields into a ``2d`` summary vector.

    Context tokens have no order, so no positional embedding and no padding
    mask are applied.

    Raises:
        DimensionError: If the number of fields does not match the model.
        VocabularyError: If a field value is outside its vocabulary.
    """
    p = as_tensors(params)
    ctx, single = _check_context(ctx_ids, config)
    x = _context_tokens(ctx, p, config)
    for i in range(config.ctx_layers):
        block = EncoderBlockParams.from_params(p, f"ctx_encoder.{i}", config.ctx_heads)
        x = encoder_block(x, block, None, config.ffn_slope, config.bypass_encoders)
    everything = np.ones(x.shape[:2], dtype=bool)
    return _squeeze(mean_max_pool(x, everything), single)


def latent_cross_combine(seq_out: Tensor, ctx_out: Tensor, slope: float = 0.01) -> Tensor:
    """``leaky_relu(seq_out * ctx_out)``.

    Raises:
        DimensionError: If the two encodings differ in shape.
    """
    if seq_out.shape != ctx_out.shape:
        raise DimensionError(
            f"Cannot cross encodings of shapes {seq_out.shape} and {ctx_out.shape}"
        )
    return ops.leaky_relu(seq_out * ctx_out, slope)


def forward(
    item_ids: np.ndarray,
    mask: np.ndarray,
    ctx_ids: np.ndarray,
    params: ParamsLike,
    config: TxTConfig,
) -> Tensor:
    """Logits over the item vocabulary, ``[V]`` or ``[B, V]``."""
    p = as_tensors(params)
    seq_out = encode_sequence(item_ids, mask, p, config)
    ctx_out = encode_context(ctx_ids, p, config)
    crossed = latent_cross_combine(seq_out, ctx_out, config.leaky_slope)
    return ops.matmul(crossed, p["output.w"]) + p["output.b"]


@dataclass
class AttentionDump:
    """Context-encoder attention weights for one example.

    ``layers[i]`` is an ``[h, m, m]`` array; row ``q`` of head ``h`` holds the
    weights query field ``q`` puts on every key field and sums to 1.
    """

    field_names: tuple[str, ...]
    layers: list[np.ndarray] = field(default_factory=list)

    def head_average(self, layer: int = 0) -> np.ndarray:
        """``[m, m]`` weights averaged over heads."""
        return np.asarray(self.layers[layer].mean(axis=0))

    def to_text(self) -> str:
        """Tab-separated table: one row per (layer, head, query field)."""
        lines = ["\t".join(["layer", "head", "query", *self.field_names])]
        for layer, weights in enumerate(self.layers):
            for head in range(weights.shape[0]):
                for q, query in enumerate(self.field_names):
                    values = [f"{w:.6f}" for w in weights[head, q]]
                    lines.append("\t".join([str(layer), str(head), query, *values]))
        return "\n".join(lines) + "\n"


def attention_weight_dump(
    ctx_ids: np.ndarray, params: ParamsLike, config: TxTConfig
) -> AttentionDump:
    """Post-softmax context-encoder attention weights for one context vector.

    The dump has one entry per context encoder layer; it is empty when the
    encoders are bypassed.

    Raises:
        DimensionError: If ``ctx_ids`` is not a single ``[m]`` vector.
    """
    p = as_tensors(params)
    ctx = np.asarray(ctx_ids, dtype=np.int64)
    if ctx.ndim != 1:
        raise DimensionError(f"Attention dumps take a single context vector, got shape {ctx.shape}")
    batched, _ = _check_context(ctx, config)
    dump = AttentionDump(field_names=config.context_names)
    if config.bypass_encoders:
        return dump
    x = _context_tokens(batched, p, config)
    for i in range(config.ctx_layers):
        prefix = f"ctx_encoder.{i}"
        attn = AttentionParams.from_params(p, f"{prefix}.attention", config.ctx_heads)
        dump.layers.append(attention_weights(x, attn).data[0].copy())
        block = EncoderBlockParams.from_params(p, prefix, config.ctx_heads)
        x = encoder_block(x, block, None, config.ffn_slope)
    return dump


class TxTModel(BaseModel):
    """TxT with parameters held as named numpy arrays."""

    kind = "txt"
    config: TxTConfig

    def __init__(
        self,
        config: TxTConfig,
        params: Mapping[str, np.ndarray] | None = None,
        seed: int = 0,
    ) -> None:
        super().__init__(config, params=params, seed=seed)

    def parameter_specs(self) -> list[ParamSpec]:
        c = self.config
        d = c.d_embed
        specs = [
            ParamSpec("item_embedding", (c.item_vocab_size, d), "normal"),
            ParamSpec("position_table", (c.seq_len, d), "normal"),
        ]
        for f in c.context_fields:
            specs.append(ParamSpec(f"context_embedding.{f.name}", (f.cardinality, d), "normal"))
        for encoder, layers in (("seq_encoder", c.seq_layers), ("ctx_encoder", c.ctx_layers)):
            for i in range(layers):
                for name, shape in block_param_shapes(f"{encoder}.{i}", d, c.d_ff).items():
                    specs.append(ParamSpec(name, shape, init_kind(name)))
        specs.append(ParamSpec("output.w", (c.cross_dim, c.item_vocab_size), "xavier"))
        specs.append(ParamSpec("output.b", (c.item_vocab_size,), "zeros"))
        return specs

    def forward(self, params: Mapping[str, Tensor], batch: Batch) -> Tensor:
        return forward(batch.item_ids, batch.mask, batch.context, params, self.config)

    def attention_dump(self, ctx_ids: np.ndarray) -> AttentionDump:
        return attention_weight_dump(ctx_ids, self.params, self.config)

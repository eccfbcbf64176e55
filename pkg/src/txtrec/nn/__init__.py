"""Neural network layers built on txtrec.tensor."""

from txtrec.nn.layers import (
    MASK_VALUE,
    AttentionParams,
    EncoderBlockParams,
    FeedForwardParams,
    LayerNormParams,
    add_positional,
    attention_weights,
    block_param_shapes,
    embedding_lookup,
    encoder_block,
    feed_forward,
    layer_norm,
    mean_max_pool,
    multi_head_self_attention,
    padding_mask,
    validate_padding_mask,
)
from txtrec.nn.losses import cross_entropy_loss

__all__ = [
    "MASK_VALUE",
    "AttentionParams",
    "EncoderBlockParams",
    "FeedForwardParams",
    "LayerNormParams",
    "add_positional",
    "attention_weights",
    "block_param_shapes",
    "cross_entropy_loss",
    "embedding_lookup",
    "encoder_block",
    "feed_forward",
    "layer_norm",
    "mean_max_pool",
    "multi_head_self_attention",
    "padding_mask",
    "validate_padding_mask",
]

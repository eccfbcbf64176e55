"""Next-item recommendation models."""

from collections.abc import Mapping
from typing import Any

import numpy as np

from txtrec.errors import ConfigError
from txtrec.models.base import BaseModel, Batch, ParamSpec, Recommender, init_params, rank_items
from txtrec.models.config import ContextField, GruConfig, ItemCFConfig, TxTConfig
from txtrec.models.gru import GruLatentCrossModel, GruModel, gru_forward, gru_latent_cross_forward
from txtrec.models.itemcf import ContextualItemCF, itemcf_fit, itemcf_recommend
from txtrec.models.txt import TxTModel, attention_weight_dump

MODEL_KINDS = ("txt", "rnn", "rnn-latent-cross", "itemcf")

_CONFIG_TYPES: dict[str, type[TxTConfig] | type[GruConfig] | type[ItemCFConfig]] = {
    "txt": TxTConfig,
    "rnn": GruConfig,
    "rnn-latent-cross": GruConfig,
    "itemcf": ItemCFConfig,
}


def config_for(kind: str, data: Mapping[str, Any]) -> Any:
    """Parse a model configuration mapping for the given kind.

    Raises:
        ConfigError: If the kind is unknown or a key is not recognised.
    """
    if kind not in _CONFIG_TYPES:
        raise ConfigError(f"Unknown model kind {kind!r}; expected one of {list(MODEL_KINDS)}")
    return _CONFIG_TYPES[kind].from_dict(dict(data))


def build_model(
    kind: str,
    config: Any,
    params: Mapping[str, np.ndarray] | None = None,
    seed: int = 0,
) -> Recommender:
    """Create a model of the given kind, freshly initialized unless ``params`` is given."""
    if kind == "txt":
        return TxTModel(config, params=params, seed=seed)
    if kind == "rnn":
        return GruModel(config, params=params, seed=seed)
    if kind == "rnn-latent-cross":
        return GruLatentCrossModel(config, params=params, seed=seed)
    if kind == "itemcf":
        return ContextualItemCF(config, params=params)
    raise ConfigError(f"Unknown model kind {kind!r}; expected one of {list(MODEL_KINDS)}")


__all__ = [
    "MODEL_KINDS",
    "BaseModel",
    "Batch",
    "ContextField",
    "ContextualItemCF",
    "GruConfig",
    "GruLatentCrossModel",
    "GruModel",
    "ItemCFConfig",
    "ParamSpec",
    "Recommender",
    "TxTConfig",
    "TxTModel",
    "attention_weight_dump",
    "build_model",
    "config_for",
    "gru_forward",
    "gru_latent_cross_forward",
    "init_params",
    "itemcf_fit",
    "itemcf_recommend",
    "rank_items",
]

"""GRU baselines: a plain sequence model and a latent-cross contextual variant."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from txtrec.errors import ConfigError, DimensionError, SequenceLengthError
from txtrec.models.base import BaseModel, Batch, ParamSpec, as_tensors
from txtrec.models.config import GruConfig
from txtrec.nn.layers import embedding_lookup
from txtrec.tensor import ops
from txtrec.tensor.core import Tensor

ParamsLike = Mapping[str, np.ndarray | Tensor]

GATES = ("z", "r", "h")


@dataclass(frozen=True)
class GruCellParams:
    """Input, recurrent and bias weights for the update, reset and candidate gates."""

    w: dict[str, Tensor]
    u: dict[str, Tensor]
    b: dict[str, Tensor]

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str = "gru") -> GruCellParams:
        return cls(
            w={g: params[f"{prefix}.w_{g}"] for g in GATES},
            u={g: params[f"{prefix}.u_{g}"] for g in GATES},
            b={g: params[f"{prefix}.b_{g}"] for g in GATES},
        )


def gru_step(x: Tensor, h: Tensor, p: GruCellParams) -> Tensor:
    """One GRU update for ``[B, d]`` inputs and states.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c.
    """
    z = ops.sigmoid(ops.matmul(x, p.w["z"]) + ops.matmul(h, p.u["z"]) + p.b["z"])
    r = ops.sigmoid(ops.matmul(x, p.w["r"]) + ops.matmul(h, p.u["r"]) + p.b["r"])
    c = ops.tanh(ops.matmul(x, p.w["h"]) + ops.matmul(r * h, p.u["h"]) + p.b["h"])
    return (1.0 - z) * h + z * c


def _final_state(
    item_ids: np.ndarray, mask: np.ndarray, p: Mapping[str, Tensor], seq_len: int
) -> Tensor:
    """Run the GRU over the real positions and return the last state ``[B, d]``."""
    if item_ids.shape[1] > seq_len:
        raise SequenceLengthError(
            f"Sequence length {item_ids.shape[1]} exceeds the maximum {seq_len}"
        )
    if mask.shape != item_ids.shape:
        raise DimensionError(f"Mask shape {mask.shape} does not match item ids {item_ids.shape}")
    cell = GruCellParams.from_params(p)
    x = embedding_lookup(p["item_embedding"], item_ids)
    d = x.shape[-1]
    h = Tensor(np.zeros((item_ids.shape[0], d)))
    for t in range(item_ids.shape[1]):
        real = mask[:, t]
        if not real.any():
            break
        stepped = gru_step(ops.select(x, 1, t), h, cell)
        # padded steps carry the previous state through unchanged
        h = ops.where(real[:, None], stepped, h)
    return h


def _prepare(item_ids: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    ids = np.asarray(item_ids, dtype=np.int64)
    m = np.asarray(mask, dtype=bool)
    if ids.ndim == 1:
        return ids[None, :], m.reshape(1, -1), True
    return ids, m, False


def _head(h: Tensor, p: Mapping[str, Tensor], single: bool) -> Tensor:
    logits = ops.matmul(h, p["output.w"]) + p["output.b"]
    if single:
        return ops.reshape(logits, (logits.shape[-1],))
    return logits


def gru_forward(
    item_ids: np.ndarray, mask: np.ndarray, params: ParamsLike, config: GruConfig
) -> Tensor:
    """Logits from the final hidden state of a GRU over the basket prefix."""
    p = as_tensors(params)
    ids, m, single = _prepare(item_ids, mask)
    h = _final_state(ids, m, p, config.seq_len)
    return _head(h, p, single)


def context_sum(ctx_ids: np.ndarray, params: ParamsLike, config: GruConfig) -> Tensor:
    """Sum of one embedding row per context field, ``[B, d]``."""
    p = as_tensors(params)
    ctx = np.asarray(ctx_ids, dtype=np.int64)
    if ctx.ndim == 1:
        ctx = ctx[None, :]
    if ctx.shape[1] != len(config.context_fields):
        raise DimensionError(
            f"Context has {ctx.shape[1]} fields, model expects {len(config.context_fields)}"
        )
    total: Tensor | None = None
    for j, f in enumerate(config.context_fields):
        row = embedding_lookup(p[f"context_embedding.{f.name}"], ctx[:, j])
        total = row if total is None else total + row
    assert total is not None
    return total


def gru_latent_cross_forward(
    item_ids: np.ndarray,
    mask: np.ndarray,
    ctx_ids: np.ndarray,
    params: ParamsLike,
    config: GruConfig,
) -> Tensor:
    """GRU whose final state is multiplied element-wise by the summed context embedding.

    When the context rows sum to a vector of ones the result is exactly
    :func:`gru_forward`.
    """
    p = as_tensors(params)
    ids, m, single = _prepare(item_ids, mask)
    h = _final_state(ids, m, p, config.seq_len)
    return _head(h * context_sum(ctx_ids, p, config), p, single)


def _gru_specs(config: GruConfig) -> list[ParamSpec]:
    d = config.d_embed
    specs = [ParamSpec("item_embedding", (config.item_vocab_size, d), "normal")]
    for g in GATES:
        specs.append(ParamSpec(f"gru.w_{g}", (d, d), "xavier"))
        specs.append(ParamSpec(f"gru.u_{g}", (d, d), "xavier"))
        specs.append(ParamSpec(f"gru.b_{g}", (d,), "zeros"))
    return specs


def _head_specs(config: GruConfig) -> list[ParamSpec]:
    return [
        ParamSpec("output.w", (config.d_embed, config.item_vocab_size), "xavier"),
        ParamSpec("output.b", (config.item_vocab_size,), "zeros"),
    ]


class GruModel(BaseModel):
    """Sequence-only GRU recommender; ignores context."""

    kind = "rnn"
    config: GruConfig

    def __init__(
        self,
        config: GruConfig,
        params: Mapping[str, np.ndarray] | None = None,
        seed: int = 0,
    ) -> None:
        super().__init__(config, params=params, seed=seed)

    def parameter_specs(self) -> list[ParamSpec]:
        return _gru_specs(self.config) + _head_specs(self.config)

    def forward(self, params: Mapping[str, Tensor], batch: Batch) -> Tensor:
        return gru_forward(batch.item_ids, batch.mask, params, self.config)


class GruLatentCrossModel(BaseModel):
    """GRU with latent-cross context conditioning.

    Context tables start near ``1 / m`` so the initial context sum is close
    to a vector of ones and training begins from the plain GRU.
    """

    kind = "rnn-latent-cross"
    config: GruConfig

    def __init__(
        self,
        config: GruConfig,
        params: Mapping[str, np.ndarray] | None = None,
        seed: int = 0,
    ) -> None:
        if not config.context_fields:
            raise ConfigError("rnn-latent-cross needs at least one context field")
        super().__init__(config, params=params, seed=seed)

    def _cross_fields(self) -> int:
        return len(self.config.context_fields)

    def parameter_specs(self) -> list[ParamSpec]:
        d = self.config.d_embed
        specs = _gru_specs(self.config)
        for f in self.config.context_fields:
            specs.append(ParamSpec(f"context_embedding.{f.name}", (f.cardinality, d), "cross"))
        return specs + _head_specs(self.config)

    def forward(self, params: Mapping[str, Tensor], batch: Batch) -> Tensor:
        return gru_latent_cross_forward(
            batch.item_ids, batch.mask, batch.context, params, self.config
        )

"""Hyperparameter records for the recommendation models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any

from txtrec.errors import ConfigError


@dataclass(frozen=True)
class ContextField:
    """One categorical context feature and its vocabulary size."""

    name: str
    cardinality: int

    def __post_init__(self) -> None:
        if self.cardinality < 1:
            raise ConfigError(
                f"Context field {self.name!r} needs a positive cardinality, got {self.cardinality}"
            )


def _context_fields(raw: Any) -> tuple[ContextField, ...]:
    result: list[ContextField] = []
    for item in raw:
        if isinstance(item, ContextField):
            result.append(item)
        elif isinstance(item, dict):
            result.append(
                ContextField(name=str(item["name"]), cardinality=int(item["cardinality"]))
            )
        else:
            name, cardinality = item
            result.append(ContextField(name=str(name), cardinality=int(cardinality)))
    return tuple(result)


@dataclass(frozen=True)
class _ModelConfig:
    """Fields shared by every model kind."""

    item_vocab_size: int
    context_fields: tuple[ContextField, ...] = ()
    seq_len: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_fields", _context_fields(self.context_fields))
        if self.item_vocab_size < 3:
            raise ConfigError(
                f"Item vocabulary needs PAD, UNK and at least one item, got {self.item_vocab_size}"
            )
        if self.seq_len < 1:
            raise ConfigError(f"Sequence length must be positive, got {self.seq_len}")
        names = [f.name for f in self.context_fields]
        if len(set(names)) != len(names):
            raise ConfigError(f"Duplicate context field names: {names}")

    @property
    def context_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.context_fields)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["context_fields"] = [
            {"name": f.name, "cardinality": f.cardinality} for f in self.context_fields
        ]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Any:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown {cls.__name__} keys: {unknown}")
        return cls(**data)


@dataclass(frozen=True)
class TxTConfig(_ModelConfig):
    """Transformer Cross Transformer hyperparameters.

    Defaults are the production training configuration: embedding size 100,
    4 sequence heads, 2 context heads, one encoder layer each, sequence
    length 5.
    """

    d_embed: int = 100
    seq_heads: int = 4
    ctx_heads: int = 2
    seq_layers: int = 1
    ctx_layers: int = 1
    leaky_slope: float = 0.01
    ffn_multiplier: int = 4
    ffn_slope: float = 0.01
    bypass_encoders: bool = False

    def __post_init__(self) -> None:
        super().__post_init__()
        if not self.context_fields:
            raise ConfigError("TxT needs at least one context field")
        for name in ("seq_heads", "ctx_heads"):
            heads = getattr(self, name)
            if heads < 1 or self.d_embed % heads != 0:
                raise ConfigError(f"d_embed {self.d_embed} is not divisible by {name}={heads}")
        if self.seq_layers < 0 or self.ctx_layers < 0:
            raise ConfigError("Encoder layer counts must be non-negative")
        if self.ffn_multiplier < 1:
            raise ConfigError(f"ffn_multiplier must be positive, got {self.ffn_multiplier}")

    @property
    def d_ff(self) -> int:
        return self.ffn_multiplier * self.d_embed

    @property
    def cross_dim(self) -> int:
        """Width of the latent cross: mean-max pooling doubles d_embed."""
        return 2 * self.d_embed


@dataclass(frozen=True)
class GruConfig(_ModelConfig):
    """GRU baseline hyperparameters; hidden size equals d_embed."""

    d_embed: int = 100

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.d_embed < 1:
            raise ConfigError(f"d_embed must be positive, got {self.d_embed}")


@dataclass(frozen=True)
class ItemCFConfig(_ModelConfig):
    """Contextual ItemCF settings.

    ``bucket_fields`` names the context fields whose joint value selects the
    popularity bucket that multiplies the similarity score.
    """

    bucket_fields: tuple[str, ...] = field(default=("hour", "weather"))

    def __post_init__(self) -> None:
        super().__post_init__()
        object.__setattr__(self, "bucket_fields", tuple(self.bucket_fields))
        missing = [f for f in self.bucket_fields if f not in self.context_names]
        if missing:
            raise ConfigError(f"Bucket fields {missing} are not context fields")

    def to_dict(self) -> dict[str, Any]:
        data = super().to_dict()
        data["bucket_fields"] = list(self.bucket_fields)
        return data

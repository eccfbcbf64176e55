"""Abstract base classes for next-item recommenders."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, ClassVar, Protocol, runtime_checkable

import numpy as np
from typing_extensions import Self

from txtrec.errors import ContractError
from txtrec.ids import RESERVED_IDS
from txtrec.nn.losses import cross_entropy_loss
from txtrec.tensor.core import Tape, Tensor
from txtrec.tensor.precision import get_dtype
from txtrec.tensor.rng import STREAM_INIT, make_rng

Params = dict[str, np.ndarray]

INIT_KINDS = frozenset({"xavier", "normal", "zeros", "ones", "cross"})


@runtime_checkable
class Batch(Protocol):
    """Columnar view of a set of training or evaluation examples.

    ``item_ids`` is ``[B, L]`` with PAD after the real positions, ``mask`` is
    the matching boolean padding mask, ``context`` is ``[B, m]`` and
    ``labels`` is ``[B]``.
    """

    item_ids: np.ndarray
    mask: np.ndarray
    context: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int: ...


@runtime_checkable
class Recommender(Protocol):
    """Protocol for anything that scores the whole item vocabulary.

    Both the gradient-trained models and the count-based ItemCF baseline
    implement it, so evaluation and serving never need to know which kind
    of model they hold.
    """

    kind: str

    @property
    def params(self) -> Params:
        """Named arrays that fully determine the model's predictions."""
        ...

    def score(self, batch: Batch) -> np.ndarray:
        """Score every item for every example.

        Args:
            batch: Examples to score.

        Returns:
            ``[B, V]`` array; higher means more likely to be the next item.
        """
        ...

    def config_dict(self) -> dict[str, Any]:
        """Hyperparameters as plain data, for persistence."""
        ...


@dataclass(frozen=True)
class ParamSpec:
    """Name, shape and initializer of one parameter array."""

    name: str
    shape: tuple[int, ...]
    init: str

    def __post_init__(self) -> None:
        if self.init not in INIT_KINDS:
            raise ContractError(f"Unknown initializer {self.init!r} for {self.name}")


def init_kind(name: str) -> str:
    """Default initializer for a parameter, chosen from its name."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "gain":
        return "ones"
    if leaf in ("bias", "b", "b1", "b2") or leaf.startswith("b_"):
        return "zeros"
    if "embedding" in name or name == "position_table":
        return "normal"
    return "xavier"


def init_params(specs: Iterable[ParamSpec], seed: int, cross_fields: int = 1) -> Params:
    """Draw initial values for every spec, in spec order.

    Matrices use Xavier uniform, embedding tables normal(0, 0.01), biases zeros
    and gains ones. ``cross`` tables start near ``1 / cross_fields`` so that a
    sum of ``cross_fields`` rows is close to a vector of ones.
    """
    rng = make_rng(seed, STREAM_INIT)
    dtype = get_dtype()
    params: Params = {}
    for spec in specs:
        if spec.init == "xavier":
            fan_in, fan_out = spec.shape[0], spec.shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            values = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.init == "normal":
            values = rng.normal(0.0, 0.01, size=spec.shape)
        elif spec.init == "cross":
            values = 1.0 / cross_fields + rng.normal(0.0, 0.01, size=spec.shape)
        elif spec.init == "ones":
            values = np.ones(spec.shape)
        else:
            values = np.zeros(spec.shape)
        params[spec.name] = values.astype(dtype)
    return params


def as_tensors(params: Mapping[str, np.ndarray | Tensor]) -> dict[str, Tensor]:
    """Wrap arrays as constant tensors; tensors pass through."""
    return {
        name: value if isinstance(value, Tensor) else Tensor(value, name=name)
        for name, value in params.items()
    }


class BaseModel(ABC):
    """Base class for models trained by gradient descent.

    Subclasses declare their parameters with :meth:`parameter_specs` and
    compute logits in :meth:`forward`. Parameters are plain numpy arrays held
    outside any tape; a tape wraps them only for the duration of one
    :meth:`loss_and_grads` call, so one model can be evaluated from several
    threads at once.
    """

    kind: ClassVar[str]

    def __init__(self, config: Any, params: Mapping[str, np.ndarray] | None = None, seed: int = 0):
        self.config = config
        if params is None:
            self._params = init_params(self.parameter_specs(), seed, self._cross_fields())
        else:
            self._params = {name: np.asarray(value) for name, value in params.items()}
            self.validate_params(self._params)

    def _cross_fields(self) -> int:
        return 1

    @property
    def params(self) -> Params:
        return self._params

    def config_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = self.config.to_dict()
        return result

    @abstractmethod
    def parameter_specs(self) -> list[ParamSpec]:
        """Every parameter array this model needs, in a stable order."""
        ...

    @abstractmethod
    def forward(self, params: Mapping[str, Tensor], batch: Batch) -> Tensor:
        """Compute ``[B, V]`` logits for a batch."""
        ...

    def validate_params(self, params: Mapping[str, np.ndarray]) -> None:
        """Check that ``params`` has exactly the declared names and shapes.

        Raises:
            ContractError: On a missing, extra or misshapen parameter.
        """
        specs = {spec.name: spec.shape for spec in self.parameter_specs()}
        missing = sorted(set(specs) - set(params))
        extra = sorted(set(params) - set(specs))
        if missing or extra:
            raise ContractError(
                f"{self.kind} parameters do not match: missing {missing}, unexpected {extra}"
            )
        for name, shape in specs.items():
            if tuple(params[name].shape) != shape:
                raise ContractError(
                    f"Parameter {name} must have shape {shape}, got {tuple(params[name].shape)}"
                )

    def with_params(self, params: Mapping[str, np.ndarray]) -> Self:
        """Return a model with the same configuration and new parameters."""
        return type(self)(self.config, params=params)

    def loss(self, params: Mapping[str, Tensor], batch: Batch) -> Tensor:
        return cross_entropy_loss(self.forward(params, batch), batch.labels)

    def loss_and_grads(self, batch: Batch) -> tuple[float, Params]:
        """Mean cross-entropy of a batch and its gradient for every parameter."""
        with Tape() as tape:
            leaves = tape.watch_all(self._params)
            loss = self.loss(leaves, batch)
        return loss.item(), tape.backward(loss)

    def score(self, batch: Batch) -> np.ndarray:
        return self.forward(as_tensors(self._params), batch).data

    def num_parameters(self) -> int:
        return sum(int(np.prod(spec.shape)) for spec in self.parameter_specs())


def rank_items(scores: np.ndarray, k: int, exclude: Iterable[int] = RESERVED_IDS) -> list[int]:
    """Ids of the k highest scores, best first, ties broken by the smaller id."""
    candidates = np.ones(scores.shape[0], dtype=bool)
    excluded = [i for i in exclude if 0 <= i < scores.shape[0]]
    candidates[excluded] = False
    ids = np.flatnonzero(candidates)
    # lexsort sorts by the last key first
    order = np.lexsort((ids, -scores[ids]))
    return [int(i) for i in ids[order[:k]]]

"""Tensor and gradient tape.

A :class:`Tensor` is a thin, immutable wrapper around a numpy array. While a
:class:`Tape` is active on the current thread, every operation whose inputs
require gradients appends a record to it; :meth:`Tape.backward` replays the
records in reverse to accumulate gradients.

Gradients are kept in buffers private to the tape, never on shared parameter
arrays, so several tapes can run on different threads against the same
parameters.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from typing_extensions import Self

from txtrec.errors import ContractError, DimensionError
from txtrec.tensor.precision import get_dtype

BackwardFn = Callable[[np.ndarray], tuple["np.ndarray | None", ...]]


class Tensor:
    """Dense n-dimensional array with optional gradient tracking.

    Attributes:
        data: Row-major numpy array in the run's precision.
        requires_grad: Whether operations on this tensor are recorded.
        grad: Gradient filled in by ``Tape.backward(..., retain=True)``.
        name: Stable parameter name for leaf tensors watched by a tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=get_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def is_finite(self) -> bool:
        """Return True if every stored value is finite."""
        return bool(np.isfinite(self.data).all())

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def item(self) -> float:
        """Return the value of a single-element tensor."""
        if self.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{grad}{name})"

    # Operator sugar; the implementations live in txtrec.tensor.ops.

    def __add__(self, other: Tensor | float) -> Tensor:
        from txtrec.tensor import ops

        return ops.add(self, other)

    def __radd__(self, other: float) -> Tensor:
        from txtrec.tensor import ops

        return ops.add(other, self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from txtrec.tensor import ops

        return ops.sub(self, other)

    def __rsub__(self, other: float) -> Tensor:
        from txtrec.tensor import ops

        return ops.sub(other, self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from txtrec.tensor import ops

        return ops.mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        from txtrec.tensor import ops

        return ops.mul(other, self)

    def __truediv__(self, other: Tensor | float) -> Tensor:
        from txtrec.tensor import ops

        return ops.div(self, other)

    def __neg__(self) -> Tensor:
        from txtrec.tensor import ops

        return ops.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from txtrec.tensor import ops

        return ops.matmul(self, other)


def tensor(data: Any, requires_grad: bool = False, name: str | None = None) -> Tensor:
    """Create a tensor from user data, rejecting non-finite values.

    Raises:
        ContractError: If the data contains NaN or infinity.
    """
    t = Tensor(data, requires_grad=requires_grad, name=name)
    if not t.is_finite():
        label = f" {name!r}" if name else ""
        raise ContractError(f"Tensor{label} contains non-finite values")
    return t


@dataclass
class OpRecord:
    """One recorded operation on a tape."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


_local = threading.local()


def active_tape() -> Tape | None:
    """Return the innermost tape active on this thread, if any."""
    stack: list[Tape] = getattr(_local, "stack", [])
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations on one thread.

    Use as a context manager; operations executed inside the ``with`` block
    are recorded in execution order, which is a topological order because an
    operation can only run after its inputs exist.

    Example:
        with Tape() as tape:
            w = tape.watch("w", np.array([2.0, -3.0]))
            loss = ops.sum(w * w)
        grads = tape.backward(loss)   # {"w": array([4., -6.])}
    """

    def __init__(self) -> None:
        self.records: list[OpRecord] = []
        self._watched: dict[str, Tensor] = {}

    def __enter__(self) -> Self:
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, exc_type: type | None, exc_val: Exception | None, exc_tb: object) -> None:
        _local.stack.pop()

    def watch(self, name: str, array: np.ndarray) -> Tensor:
        """Register a parameter array as a named leaf that receives gradients.

        The array itself is not copied or modified.
        """
        if name in self._watched:
            raise ContractError(f"Parameter {name!r} is already watched by this tape")
        leaf = Tensor(array, requires_grad=True, name=name)
        self._watched[name] = leaf
        return leaf

    def watch_all(self, params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
        """Watch every array in a parameter mapping, preserving its order."""
        return {name: self.watch(name, array) for name, array in params.items()}

    @property
    def watched(self) -> dict[str, Tensor]:
        return dict(self._watched)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, fn: BackwardFn) -> None:
        self.records.append(OpRecord(op, inputs, output, fn))

    def backward(self, loss: Tensor, retain: bool = False) -> dict[str, np.ndarray]:
        """Accumulate d(loss)/d(parameter) for every watched parameter.

        Args:
            loss: Scalar tensor produced on this tape.
            retain: Also store each watched leaf's gradient on ``leaf.grad``.

        Returns:
            Mapping of parameter name to gradient array. Parameters that do not
            influence the loss get zeros.

        Raises:
            ContractError: If the loss is not a scalar.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            input_grads = rec.backward(g)
            for inp, ig in zip(rec.inputs, input_grads, strict=True):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig

        result: dict[str, np.ndarray] = {}
        for name, leaf in self._watched.items():
            g = grads.get(id(leaf))
            if g is None:
                g = np.zeros_like(leaf.data)
            result[name] = g
            if retain:
                leaf.grad = g
        return result


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Run ``tape.backward(loss)``; see :meth:`Tape.backward`."""
    return tape.backward(loss)

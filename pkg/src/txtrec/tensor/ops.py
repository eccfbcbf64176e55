"""Differentiable tensor operations.

Each operation computes its result with numpy and, when a tape is active and
an input requires gradients, records a backward rule on that tape.

Broadcasting rule: two operand shapes are compatible when they are equal,
when one is a suffix of the other (a bias ``[d]`` against ``[..., d]`` or a
scalar against anything), or when they have the same rank and every differing
dimension is 1 in one of them (a ``[B, L, 1]`` normalizer against
``[B, L, d]``). Nothing else broadcasts.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from txtrec.errors import DimensionError, VocabularyError
from txtrec.tensor.core import BackwardFn, Tensor, active_tape

Operand = Tensor | float | int


def _as_tensor(x: Operand) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, fn)
    return out


def check_broadcast(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    """Raise DimensionError unless shapes a and b follow the broadcasting rule."""
    if a == b:
        return
    short, long = (a, b) if len(a) <= len(b) else (b, a)
    if long[len(long) - len(short) :] == short:
        return
    if len(a) == len(b) and all(x == y or x == 1 or y == 1 for x, y in zip(a, b, strict=True)):
        return
    raise DimensionError(f"{op}: incompatible shapes {a} and {b}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- element-wise binary ---


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    check_broadcast("add", ta.shape, tb.shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return _result("add", ta.data + tb.data, (ta, tb), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    check_broadcast("sub", ta.shape, tb.shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)

    return _result("sub", ta.data - tb.data, (ta, tb), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    check_broadcast("mul", ta.shape, tb.shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)

    return _result("mul", ta.data * tb.data, (ta, tb), backward)


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    check_broadcast("div", ta.shape, tb.shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        ga = _unbroadcast(g / tb.data, ta.shape)
        gb = _unbroadcast(-g * ta.data / (tb.data * tb.data), tb.shape)
        return ga, gb

    return _result("div", ta.data / tb.data, (ta, tb), backward)


def neg(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (-g,)

    return _result("neg", -x.data, (x,), backward)


# --- element-wise unary ---


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * y,)

    return _result("exp", y, (x,), backward)


def log(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g / x.data,)

    return _result("log", np.log(x.data), (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * 0.5 / y,)

    return _result("sqrt", y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * (1.0 - y * y),)

    return _result("tanh", y, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # tanh form does not overflow for large negative inputs
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * y * (1.0 - y),)

    return _result("sigmoid", y, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """x where x >= 0, slope * x elsewhere."""
    positive = x.data >= 0
    y = np.where(positive, x.data, slope * x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.where(positive, g, slope * g),)

    return _result("leaky_relu", y, (x,), backward)


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}
_UNARY = {"neg": neg, "exp": exp, "log": log, "sqrt": sqrt, "tanh": tanh, "sigmoid": sigmoid}


def elementwise(kind: str, *operands: Operand, slope: float = 0.01) -> Tensor:
    """Apply a point-wise operation by name.

    Args:
        kind: One of add, sub, mul, div, neg, exp, log, sqrt, tanh, sigmoid,
            leaky_relu.
        operands: One operand for unary kinds, two for binary kinds.
        slope: Negative-side slope for leaky_relu.
    """
    if kind in _BINARY:
        if len(operands) != 2:
            raise DimensionError(f"{kind} takes 2 operands, got {len(operands)}")
        return _BINARY[kind](operands[0], operands[1])
    if len(operands) != 1:
        raise DimensionError(f"{kind} takes 1 operand, got {len(operands)}")
    x = _as_tensor(operands[0])
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind in _UNARY:
        return _UNARY[kind](x)
    raise ValueError(f"Unknown element-wise operation {kind!r}")


# --- linear algebra ---


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``a`` may carry leading batch axes; ``b`` is either a plain matrix shared
    across the batch or carries the same batch axes as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dimensions differ for shapes {a.shape} and {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _result("matmul", a.data @ b.data, (a, b), backward)


# --- reductions ---


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result("sum", np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return div(sum(x, axis=axis, keepdims=keepdims), float(count))


def max(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along an axis; the gradient goes to the first maximal entry."""
    idx = np.argmax(x.data, axis=axis)
    idx = np.expand_dims(idx, axis)
    y = np.take_along_axis(x.data, idx, axis=axis)
    if not keepdims:
        y = np.squeeze(y, axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        gk = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros_like(x.data)
        np.put_along_axis(out, idx, gk, axis=axis)
        return (out,)

    return _result("max", y, (x,), backward)


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by subtracting the row maximum."""
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax needs a non-empty last dimension, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result("softmax", y, (x,), backward)


def log_softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"log_softmax needs a non-empty last dimension, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _result("log_softmax", y, (x,), backward)


# --- shape and indexing ---


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        y = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g.reshape(x.shape),)

    return _result("reshape", y, (x,), backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(int(i) for i in np.argsort(axes))

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.transpose(g, inverse),)

    return _result("transpose", np.transpose(x.data, axes), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(tensors)
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    try:
        y = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError as e:
        shapes = [t.shape for t in parts]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from e
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", y, parts, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(tensors)
    if not parts:
        raise DimensionError("stack needs at least one tensor")
    shapes = {t.shape for t in parts}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ: {sorted(shapes)}")
    y = np.stack([t.data for t in parts], axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _result("stack", y, parts, backward)


def select(x: Tensor, axis: int, index: int) -> Tensor:
    """Take one slice along an axis, dropping that axis."""
    y = np.take(x.data, index, axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        out = np.zeros_like(x.data)
        slicer: list[slice | int] = [slice(None)] * x.ndim
        slicer[axis] = index
        out[tuple(slicer)] = g
        return (out,)

    return _result("select", y, (x,), backward)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather ``table[ids]``; repeated ids accumulate gradient.

    Raises:
        VocabularyError: If an id is outside ``[0, rows)``.
    """
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        bad = int(ids[(ids < 0) | (ids >= rows)].flat[0])
        raise VocabularyError(f"id {bad} is outside the table range [0, {rows})")
    y = table.data[ids]

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape((-1, *table.shape[1:])))
        return (out,)

    return _result("gather_rows", y, (table,), backward)


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """Select one entry of the last axis per row: ``x[..., index[...]]``.

    Raises:
        VocabularyError: If an index is outside the last dimension.
    """
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[-1]
    if index.shape != x.shape[:-1]:
        raise DimensionError(f"pick: index shape {index.shape} does not match {x.shape[:-1]}")
    if index.size and (index.min() < 0 or index.max() >= n):
        bad = int(index[(index < 0) | (index >= n)].flat[0])
        raise VocabularyError(f"label {bad} is outside [0, {n})")
    idx = index[..., None]
    y = np.take_along_axis(x.data, idx, axis=-1)[..., 0]

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        out = np.zeros_like(x.data)
        np.put_along_axis(out, idx, g[..., None], axis=-1)
        return (out,)

    return _result("pick", y, (x,), backward)


def where(cond: np.ndarray, a: Operand, b: Operand) -> Tensor:
    """Choose ``a`` where ``cond`` is true and ``b`` elsewhere.

    ``cond`` is a constant boolean array following the broadcasting rule.
    """
    ta, tb = _as_tensor(a), _as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    check_broadcast("where", cond.shape, ta.shape)
    check_broadcast("where", ta.shape, tb.shape)
    y = np.where(cond, ta.data, tb.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        zero = np.zeros_like(g)
        return (
            _unbroadcast(np.where(cond, g, zero), ta.shape),
            _unbroadcast(np.where(cond, zero, g), tb.shape),
        )

    return _result("where", y, (ta, tb), backward)

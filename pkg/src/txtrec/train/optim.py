"""Pure-function optimizers over named parameter arrays.

Every step returns new parameter arrays and a new state; nothing is updated
in place, so replaying a recorded gradient stream reproduces the parameters
bit for bit.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from txtrec.errors import ConfigError, DimensionError, TrainingError

Params = dict[str, np.ndarray]

OPTIMIZERS = ("adam", "sgd")


def _check_grads(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
    for name, value in params.items():
        if name not in grads:
            raise DimensionError(f"No gradient for parameter {name}")
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(f"Gradient for {name} has shape {g.shape}, expected {value.shape}")
        if not np.isfinite(g).all():
            raise TrainingError(f"Non-finite gradient for parameter {name}")


class OptimizerState(Protocol):
    """State of an optimizer that can apply one update."""

    t: int

    def apply(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> tuple[Params, OptimizerState]: ...


@dataclass(frozen=True)
class AdamState:
    """First and second moment estimates plus Adam's hyperparameters."""

    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initial(cls, params: Mapping[str, np.ndarray], lr: float = 0.001) -> AdamState:
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            lr=lr,
        )

    def apply(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> tuple[Params, AdamState]:
        return adam_step(params, grads, self)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[Params, AdamState]:
    """One Adam update with bias-corrected moments.

    Raises:
        TrainingError: If a gradient has a NaN or infinite entry; the message
            names the parameter.
        DimensionError: If a gradient is missing or misshapen.
    """
    _check_grads(params, grads)
    t = state.t + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = (value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            value.dtype, copy=False
        )
        new_m[name] = m.astype(value.dtype, copy=False)
        new_v[name] = v.astype(value.dtype, copy=False)
    return new_params, replace(state, m=new_m, v=new_v, t=t)


@dataclass(frozen=True)
class SgdState:
    """Plain stochastic gradient descent; only counts steps."""

    t: int = 0
    lr: float = 0.001

    @classmethod
    def initial(cls, params: Mapping[str, np.ndarray], lr: float = 0.001) -> SgdState:
        return cls(lr=lr)

    def apply(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> tuple[Params, SgdState]:
        return sgd_step(params, grads, self)


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: SgdState,
) -> tuple[Params, SgdState]:
    """``theta <- theta - lr * g``.

    Raises:
        TrainingError: If a gradient has a NaN or infinite entry.
    """
    _check_grads(params, grads)
    new_params = {
        name: (value - state.lr * grads[name]).astype(value.dtype, copy=False)
        for name, value in params.items()
    }
    return new_params, replace(state, t=state.t + 1)


def make_optimizer(name: str, params: Mapping[str, np.ndarray], lr: float) -> OptimizerState:
    """Initial state of the named optimizer.

    Raises:
        ConfigError: If the optimizer is unknown.
    """
    if name == "adam":
        return AdamState.initial(params, lr)
    if name == "sgd":
        return SgdState.initial(params, lr)
    raise ConfigError(f"Unknown optimizer {name!r}; expected one of {list(OPTIMIZERS)}")


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Params:
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    scale = max_norm / norm
    return {name: (g * scale).astype(g.dtype, copy=False) for name, g in grads.items()}

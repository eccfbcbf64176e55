"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from txtrec.errors import ContractError
from txtrec.tensor.core import Tape, Tensor
from txtrec.tensor.precision import get_precision
from txtrec.tensor.rng import STREAM_GRADCHECK, make_rng

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


@dataclass
class GradCheckReport:
    """Per-parameter relative errors between analytic and numeric gradients."""

    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.errors.items() if v > self.tolerance}


def analytic_gradients(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gradients of ``loss_fn`` with respect to every array in ``params``."""
    with Tape() as tape:
        leaves = tape.watch_all(params)
        loss = loss_fn(leaves)
    return tape.backward(loss)


def _evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    return loss_fn({name: Tensor(a) for name, a in params.items()}).item()


def check_gradients(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients with central finite differences.

    The relative error of a parameter is ``|a - n| / max(|a|, |n|, 1e-8)``
    taken over the vector norms of the analytic (a) and numeric (n) gradients
    restricted to the checked entries.

    Args:
        loss_fn: Maps named tensors to a scalar loss.
        params: Parameter arrays; perturbed copies are used, originals untouched.
        step: Central-difference step.
        tolerance: Pass threshold recorded on the report.
        max_entries: Check at most this many randomly chosen entries per
            parameter (all entries when None).
        seed: Seed for choosing checked entries.

    Raises:
        ContractError: If called outside wide (float64) precision.
    """
    if get_precision() != "float64":
        raise ContractError("Gradient checks need wide (float64) precision")

    work = {name: np.array(a, dtype=np.float64) for name, a in params.items()}
    analytic = analytic_gradients(loss_fn, work)
    rng = make_rng(seed, STREAM_GRADCHECK)
    report = GradCheckReport(tolerance=tolerance)

    for name, array in work.items():
        flat = array.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(entries.size)
        for j, i in enumerate(entries):
            original = flat[i]
            flat[i] = original + step
            plus = _evaluate(loss_fn, work)
            flat[i] = original - step
            minus = _evaluate(loss_fn, work)
            flat[i] = original
            numeric[j] = (plus - minus) / (2.0 * step)
        a = analytic[name].reshape(-1)[entries]
        denom = np.maximum(np.maximum(np.linalg.norm(a), np.linalg.norm(numeric)), 1e-8)
        report.errors[name] = float(np.linalg.norm(a - numeric) / denom)

    return report

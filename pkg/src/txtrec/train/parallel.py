"""Synchronous data-parallel steps over in-process workers.

Each worker holds a replica of the model and computes the gradient of its
own batch on a thread. The coordinator averages the gradients, applies one
optimizer step and hands the new parameters back to every replica, so all
replicas are identical at the start of each step.

Averaging uses a fixed pairwise tree in ascending worker id order:
((g0 + g1) + (g2 + g3)) / 4 for four workers. Because the batch loss is a
mean, the averaged gradient equals the gradient of the combined batch.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from txtrec.data.examples import ExampleSet
from txtrec.errors import ContractError, TrainingError
from txtrec.models.base import BaseModel
from txtrec.train.optim import OptimizerState, Params, clip_by_global_norm

logger = logging.getLogger(__name__)


@dataclass
class WorkerSlot:
    """One worker and the model replica it computes gradients with."""

    worker_id: int
    model: BaseModel


@dataclass(frozen=True)
class StepResult:
    """Outcome of one synchronous step."""

    params: Params
    state: OptimizerState
    loss: float


def make_slots(model: BaseModel, workers: int) -> list[WorkerSlot]:
    """``workers`` slots whose replicas share the model's current parameters."""
    if workers < 1:
        raise ContractError(f"Need at least one worker, got {workers}")
    params = model.params
    return [
        WorkerSlot(worker_id=i, model=model.with_params({k: v.copy() for k, v in params.items()}))
        for i in range(workers)
    ]


def reduce_gradients(grad_maps: Sequence[Mapping[str, np.ndarray]]) -> Params:
    """Average gradients with ascending-id pairwise summation.

    Raises:
        ContractError: If no gradients are given.
    """
    if not grad_maps:
        raise ContractError("Cannot reduce an empty list of gradients")
    level: list[Mapping[str, np.ndarray]] = list(grad_maps)
    while len(level) > 1:
        paired: list[Mapping[str, np.ndarray]] = []
        for i in range(0, len(level), 2):
            if i + 1 < len(level):
                left, right = level[i], level[i + 1]
                paired.append({name: left[name] + right[name] for name in left})
            else:
                paired.append(level[i])
        level = paired
    count = len(grad_maps)
    return {name: g / count for name, g in level[0].items()}


def _check_synchronized(slots: Sequence[WorkerSlot]) -> None:
    reference = slots[0].model.params
    for slot in slots[1:]:
        params = slot.model.params
        if params.keys() != reference.keys() or not all(
            np.array_equal(params[name], reference[name]) for name in reference
        ):
            raise ContractError(f"Replica of worker {slot.worker_id} is out of sync")


def parallel_step(
    slots: Sequence[WorkerSlot],
    batches: Sequence[ExampleSet],
    state: OptimizerState,
    clip_norm: float | None = None,
    executor: Executor | None = None,
) -> StepResult:
    """One synchronous step: concurrent gradients, averaged, one optimizer update.

    Args:
        slots: Workers in ascending id order.
        batches: One batch per worker, all the same size.
        state: Shared optimizer state.
        clip_norm: Optional global-norm limit for the averaged gradient.
        executor: Pool to run workers on; a temporary one is used if omitted.

    Returns:
        The new shared parameters, optimizer state and mean batch loss. Every
        slot's replica is replaced by the new parameters.

    Raises:
        ContractError: On a worker/batch count mismatch, unequal batch sizes
            or unsynchronized replicas.
        TrainingError: If any worker returns a non-finite loss or gradient.
    """
    if len(slots) != len(batches):
        raise ContractError(f"{len(slots)} workers but {len(batches)} batches")
    sizes = sorted({len(b) for b in batches})
    if len(sizes) != 1:
        raise ContractError(f"Worker batches must have equal sizes, got {sizes}")
    _check_synchronized(slots)

    def work(pair: tuple[WorkerSlot, ExampleSet]) -> tuple[float, Params]:
        slot, worker_batch = pair
        return slot.model.loss_and_grads(worker_batch)

    if executor is None:
        with ThreadPoolExecutor(max_workers=len(slots), thread_name_prefix="txtrec-worker") as pool:
            results = list(pool.map(work, zip(slots, batches, strict=True)))
    else:
        results = list(executor.map(work, zip(slots, batches, strict=True)))

    for slot, (loss, grads) in zip(slots, results, strict=True):
        if not np.isfinite(loss):
            raise TrainingError(f"Worker {slot.worker_id} returned a non-finite loss")
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise TrainingError(
                    f"Worker {slot.worker_id} returned a non-finite gradient for {name}"
                )

    averaged = reduce_gradients([grads for _, grads in results])
    if clip_norm is not None:
        averaged = clip_by_global_norm(averaged, clip_norm)
    new_params, new_state = state.apply(slots[0].model.params, averaged)
    for slot in slots:
        slot.model = slot.model.with_params({k: v.copy() for k, v in new_params.items()})
    mean_loss = float(np.mean([loss for loss, _ in results]))
    logger.debug("Parallel step %d over %d workers: loss %.6f", new_state.t, len(slots), mean_loss)
    return StepResult(params=new_params, state=new_state, loss=mean_loss)

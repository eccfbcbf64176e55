"""Optimizers, the training loop and synchronous data-parallel steps."""

from txtrec.train.loop import LossTrace, TrainConfig, TrainResult, train
from txtrec.train.optim import (
    AdamState,
    SgdState,
    adam_step,
    clip_by_global_norm,
    make_optimizer,
    sgd_step,
)
from txtrec.train.parallel import WorkerSlot, make_slots, parallel_step, reduce_gradients

__all__ = [
    "AdamState",
    "LossTrace",
    "SgdState",
    "TrainConfig",
    "TrainResult",
    "WorkerSlot",
    "adam_step",
    "clip_by_global_norm",
    "make_optimizer",
    "make_slots",
    "parallel_step",
    "reduce_gradients",
    "sgd_step",
    "train",
]

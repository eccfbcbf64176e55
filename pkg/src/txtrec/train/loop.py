"""Training loop for the gradient-trained models and fitting for ItemCF."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np

from txtrec.data.dataset import Dataset
from txtrec.data.examples import ExampleSet, batch
from txtrec.errors import ConfigError, ContractError, TrainingError
from txtrec.metrics import EvalReport, evaluate
from txtrec.models.base import BaseModel, Recommender, as_tensors
from txtrec.models.itemcf import ContextualItemCF
from txtrec.store.bundle import ModelBundle
from txtrec.tensor.precision import PRECISIONS, get_dtype, precision
from txtrec.train.optim import OPTIMIZERS, OptimizerState, clip_by_global_norm, make_optimizer
from txtrec.train.parallel import make_slots, parallel_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    The defaults (one epoch, batch size 512, Adam with learning rate 0.001)
    suit a production-sized corpus; small corpora need many more epochs.
    """

    epochs: int = 1
    batch_size: int = 512
    seed: int = 0
    workers: int = 1
    precision: str = "float32"
    lr: float = 0.001
    optimizer: str = "adam"
    clip_norm: float | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.precision not in PRECISIONS:
            raise ConfigError(
                f"precision must be one of {list(PRECISIONS)}, got {self.precision!r}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"optimizer must be one of {list(OPTIMIZERS)}, got {self.optimizer!r}"
            )
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown TrainConfig keys: {unknown}")
        return cls(**data)


@dataclass
class LossTrace:
    """Per-step training loss and per-epoch validation results."""

    steps: list[tuple[int, float]] = field(default_factory=list)
    validation: list[tuple[int, float, EvalReport]] = field(default_factory=list)

    def add(self, step: int, loss: float) -> None:
        self.steps.append((step, loss))

    @property
    def losses(self) -> np.ndarray:
        return np.array([loss for _, loss in self.steps])

    def smoothed(self, window: int = 10) -> np.ndarray:
        """Means over consecutive, non-overlapping windows of ``window`` steps."""
        losses = self.losses
        n = len(losses) // window
        return losses[: n * window].reshape(n, window).mean(axis=1)

    def format_text(self) -> str:
        """Two columns, step and loss, one line per step."""
        return "".join(f"{step}\t{loss:.8f}\n" for step, loss in self.steps)

    def write(self, path: Path) -> None:
        path.write_text(self.format_text(), encoding="utf-8")


@dataclass
class TrainResult:
    """A trained model, its bundle and the loss trace of the run."""

    model: Recommender
    bundle: ModelBundle
    trace: LossTrace

    @property
    def final_report(self) -> EvalReport | None:
        return self.trace.validation[-1][2] if self.trace.validation else None


def _groups(batches: Sequence[ExampleSet], workers: int) -> list[list[ExampleSet]]:
    return [list(batches[i : i + workers]) for i in range(0, len(batches), workers)]


def _fit_itemcf(model: ContextualItemCF, dataset: Dataset) -> ContextualItemCF:
    if dataset.baskets is not None:
        model.fit(dataset.baskets.items, list(dataset.baskets.context))
    else:
        # caches written without complete orders; prefixes are the best left
        logger.warning("Dataset has no complete orders; fitting ItemCF on example prefixes")
        model.fit(dataset.train.orders(), list(dataset.train.context))
    return model


def _train_gradient(
    model: BaseModel, dataset: Dataset, config: TrainConfig, trace: LossTrace
) -> BaseModel:
    dtype = get_dtype()
    model = model.with_params({k: v.astype(dtype) for k, v in model.params.items()})
    state: OptimizerState = make_optimizer(config.optimizer, model.params, config.lr)
    step = 0
    executor = (
        ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="txtrec-worker")
        if config.workers > 1
        else None
    )
    try:
        for epoch in range(config.epochs):
            batches = list(batch(dataset.train, config.batch_size, seed=config.seed + epoch))
            epoch_losses: list[float] = []
            for group in _groups(batches, config.workers):
                if len(group) > 1 and len({len(b) for b in group}) == 1:
                    slots = make_slots(model, len(group))
                    result = parallel_step(slots, group, state, config.clip_norm, executor)
                    model, state = model.with_params(result.params), result.state
                    step += 1
                    trace.add(step, result.loss)
                    epoch_losses.append(result.loss)
                    continue
                # uneven tail groups fall back to sequential steps
                for b in group:
                    loss, grads = model.loss_and_grads(b)
                    if not np.isfinite(loss):
                        raise TrainingError(f"Loss became non-finite at step {step + 1}")
                    if config.clip_norm is not None:
                        grads = clip_by_global_norm(grads, config.clip_norm)
                    params, state = state.apply(model.params, grads)
                    model = model.with_params(params)
                    step += 1
                    trace.add(step, loss)
                    epoch_losses.append(loss)
                    logger.debug("Step %d: loss %.6f", step, loss)
            mean_loss = float(np.mean(epoch_losses))
            if dataset.valid is not None and len(dataset.valid):
                report = evaluate(model, dataset.valid, model_id=model.kind)
                valid_loss = _mean_loss(model, dataset.valid, config.batch_size)
                trace.validation.append((epoch + 1, valid_loss, report))
                logger.info(
                    "Epoch %d/%d: loss %.4f, validation loss %.4f, top1 %.4f, top3 %.4f",
                    epoch + 1,
                    config.epochs,
                    mean_loss,
                    valid_loss,
                    report.top1,
                    report.top3,
                )
            else:
                logger.info("Epoch %d/%d: loss %.4f", epoch + 1, config.epochs, mean_loss)
    finally:
        if executor is not None:
            executor.shutdown()
    return model


def _mean_loss(model: BaseModel, examples: ExampleSet, batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(examples), batch_size):
        chunk = examples.take(np.arange(start, min(start + batch_size, len(examples))))
        loss = model.loss(as_tensors(model.params), chunk).item()
        total += loss * len(chunk)
    return total / len(examples)


def train(
    model: Recommender,
    dataset: Dataset,
    config: TrainConfig | None = None,
    version_tag: str | None = None,
    created_at: datetime | None = None,
) -> TrainResult:
    """Train a model and package it as a bundle.

    Gradient-trained models run ``config.epochs`` passes of seeded mini-batch
    optimization; with ``workers > 1`` each group of equal-sized batches is
    one synchronous data-parallel step. ItemCF is fitted from counts in one
    pass and has an empty loss trace.

    Args:
        model: Freshly initialized (or warm-started) model.
        dataset: Training examples, optional validation examples, vocabularies.
        config: Optimization settings; defaults to :class:`TrainConfig`.
        version_tag: Bundle version tag; derived from the content if omitted.
        created_at: Bundle creation time; defaults to the newest training
            order time.

    Raises:
        ContractError: If the training set is empty.
        TrainingError: If the loss or a gradient becomes non-finite.
    """
    config = config or TrainConfig()
    if len(dataset.train) == 0:
        raise ContractError("Cannot train on an empty dataset")
    trace = LossTrace()
    with precision(config.precision):
        if isinstance(model, ContextualItemCF):
            trained: Recommender = _fit_itemcf(model, dataset)
            if dataset.valid is not None and len(dataset.valid):
                trace.validation.append(
                    (1, float("nan"), evaluate(trained, dataset.valid, model_id=model.kind))
                )
        elif isinstance(model, BaseModel):
            trained = _train_gradient(model, dataset, config, trace)
        else:
            raise ContractError(f"Do not know how to train a {type(model).__name__}")
        bundle = ModelBundle.from_model(
            trained,
            dataset.vocabs,
            created_at=created_at or dataset.newest,
            version_tag=version_tag,
        )
    logger.info("Trained %s as %s", trained.kind, bundle.version_tag)
    return TrainResult(model=trained, bundle=bundle, trace=trace)

"""Offline Top-k accuracy evaluation."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from txtrec.data.examples import ExampleSet
from txtrec.errors import ContractError, VocabularyError
from txtrec.ids import RESERVED_IDS
from txtrec.models.base import Recommender

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3)


def label_ranks(
    scores: np.ndarray,
    labels: np.ndarray,
    excluded: Iterable[int] = RESERVED_IDS,
) -> np.ndarray:
    """Zero-based rank of each row's label among the candidate items.

    An item outranks the label if it scores higher, or scores the same and
    has a smaller id. Excluded ids are not candidates.

    Raises:
        ContractError: If the input is empty or a label is an excluded id.
        VocabularyError: If a label is outside ``[0, V)``.
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ContractError(f"Expected a non-empty [N, V] score array, got shape {scores.shape}")
    if labels.shape != (scores.shape[0],):
        raise ContractError(f"Expected {scores.shape[0]} labels, got shape {labels.shape}")
    n_items = scores.shape[1]
    if labels.min() < 0 or labels.max() >= n_items:
        raise VocabularyError(f"Labels must lie in [0, {n_items})")
    candidate = np.ones(n_items, dtype=bool)
    excluded_ids = [i for i in excluded if 0 <= i < n_items]
    candidate[excluded_ids] = False
    if not candidate[labels].all():
        raise ContractError("Labels must not be excluded ids")
    rows = np.arange(scores.shape[0])
    label_scores = scores[rows, labels][:, None]
    ids = np.arange(n_items)[None, :]
    ahead = (scores > label_scores) | ((scores == label_scores) & (ids < labels[:, None]))
    return np.asarray((ahead & candidate[None, :]).sum(axis=1))


def top_k_accuracy(
    scores: np.ndarray,
    labels: np.ndarray,
    k: int,
    excluded: Iterable[int] = RESERVED_IDS,
) -> float:
    """Fraction of rows whose label is among the k best-scored candidates.

    Ties are broken by the smaller item id, so the result is deterministic.

    Args:
        scores: ``[N, V]`` logits or probabilities.
        labels: ``[N]`` true next-item ids.
        k: Cut-off, at least 1.
        excluded: Ids that are never candidates; PAD and UNK by default.

    Raises:
        ContractError: If ``k`` is below 1 or the input is empty.
    """
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    return float((label_ranks(scores, labels, excluded) < k).mean())


@dataclass
class EvalReport:
    """Top-k accuracies of one model on one example set."""

    model: str
    n_examples: int
    accuracy: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for k, value in self.accuracy.items():
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"Top-{k} accuracy {value} is outside [0, 1]")

    @property
    def top1(self) -> float:
        return self.accuracy[1]

    @property
    def top3(self) -> float:
        return self.accuracy[3]

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "model": self.model,
            "n_examples": self.n_examples,
            "accuracy": {f"top{k}": v for k, v in sorted(self.accuracy.items())},
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def format_text(self) -> str:
        """One tab-separated line per k: model, k, accuracy, n."""
        lines = ["model\tk\taccuracy\tn"]
        for k, value in sorted(self.accuracy.items()):
            lines.append(f"{self.model}\t{k}\t{value:.6f}\t{self.n_examples}")
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> None:
        path.write_text(self.format_text(), encoding="utf-8")


def evaluate(
    model: Recommender,
    examples: ExampleSet,
    ks: Sequence[int] = DEFAULT_KS,
    model_id: str | None = None,
    batch_size: int = 1024,
) -> EvalReport:
    """Score every example and aggregate Top-k accuracy for each k.

    Raises:
        ContractError: If ``examples`` is empty or a k is below 1.
    """
    n = len(examples)
    if n == 0:
        raise ContractError("Cannot evaluate on an empty example set")
    if not ks or min(ks) < 1:
        raise ContractError(f"Every k must be at least 1, got {list(ks)}")
    ranks: list[np.ndarray] = []
    for start in range(0, n, batch_size):
        chunk = examples.take(np.arange(start, min(start + batch_size, n)))
        ranks.append(label_ranks(model.score(chunk), chunk.labels))
    all_ranks = np.concatenate(ranks)
    report = EvalReport(
        model=model_id or model.kind,
        n_examples=n,
        accuracy={int(k): float((all_ranks < k).mean()) for k in sorted(set(ks))},
    )
    logger.info("Evaluated %s on %d examples: %s", report.model, n, report.to_dict()["accuracy"])
    return report

"""Tests for Top-k accuracy and evaluation reports."""

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from txtrec.data import ExampleSet
from txtrec.errors import ContractError, VocabularyError
from txtrec.metrics import EvalReport, evaluate, label_ranks, top_k_accuracy
from txtrec.models.base import Batch, Params
from txtrec.nn import padding_mask


class FixedScores:
    """Recommender that returns one stored score row per example label."""

    kind = "fixed"

    def __init__(self, rows: dict[int, np.ndarray]) -> None:
        self.rows = rows

    @property
    def params(self) -> Params:
        return {}

    def config_dict(self) -> dict[str, Any]:
        return {}

    def score(self, batch: Batch) -> np.ndarray:
        return np.stack([self.rows[int(label)] for label in batch.labels])


def sort_oracle(scores: np.ndarray, labels: np.ndarray, k: int, excluded: tuple[int, ...]) -> float:
    """Top-k by fully sorting (-score, id) pairs per row."""
    hits = 0
    for row, label in zip(scores, labels, strict=True):
        ranked = sorted((-s, i) for i, s in enumerate(row) if i not in excluded)
        hits += label in [i for _, i in ranked[:k]]
    return hits / len(labels)


def examples(labels: list[int]) -> ExampleSet:
    n = len(labels)
    return ExampleSet(
        np.full((n, 2), 2), padding_mask([1] * n, 2), np.zeros((n, 1)), np.array(labels)
    )


class TestTopKAccuracy:
    """Tests for Top-k accuracy."""

    def test_argmax_label(self) -> None:
        """Labels at the row maximum score 1.0 for every k."""
        scores = np.array([[0.0, 0.0, 5.0, 1.0], [0.0, 0.0, 1.0, 5.0]])
        for k in (1, 2, 3):
            assert top_k_accuracy(scores, np.array([2, 3]), k) == 1.0

    def test_uniform_ties_by_id(self) -> None:
        """With equal scores the largest id ranks last and misses at k=3."""
        scores = np.zeros((1, 4))
        assert top_k_accuracy(scores, np.array([3]), 3, excluded=()) == 0.0
        assert top_k_accuracy(scores, np.array([2]), 3, excluded=()) == 1.0
        assert top_k_accuracy(scores, np.array([3]), 4, excluded=()) == 1.0

    def test_reserved_ids_not_candidates(self) -> None:
        """PAD and UNK never push a label down the ranking."""
        scores = np.array([[9.0, 9.0, 1.0, 2.0]])
        assert top_k_accuracy(scores, np.array([3]), 1) == 1.0
        assert top_k_accuracy(scores, np.array([2]), 1) == 0.0

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_matches_sort_oracle(self, k: int) -> None:
        """Random rows with ties agree with a full sort."""
        rng = np.random.default_rng(k)
        scores = rng.integers(0, 4, size=(50, 10)).astype(float)
        labels = rng.integers(2, 10, size=50)
        expected = sort_oracle(scores, labels, k, (0, 1))
        assert top_k_accuracy(scores, labels, k) == pytest.approx(expected)

    def test_monotone_and_complete(self) -> None:
        """Accuracy never drops as k grows and reaches 1 at the candidate count."""
        rng = np.random.default_rng(0)
        scores = rng.normal(size=(30, 8))
        labels = rng.integers(2, 8, size=30)
        values = [top_k_accuracy(scores, labels, k) for k in range(1, 7)]
        assert values == sorted(values)
        assert values[-1] == 1.0

    def test_row_shift_invariant(self) -> None:
        """Adding a constant per row leaves accuracy unchanged."""
        rng = np.random.default_rng(1)
        scores = rng.normal(size=(20, 6))
        labels = rng.integers(2, 6, size=20)
        shifted = scores + rng.normal(size=(20, 1)) * 10
        assert top_k_accuracy(scores, labels, 2) == top_k_accuracy(shifted, labels, 2)

    def test_errors(self) -> None:
        """Empty input, bad k and bad labels are rejected."""
        with pytest.raises(ContractError, match="non-empty"):
            top_k_accuracy(np.zeros((0, 4)), np.zeros(0), 1)
        with pytest.raises(ContractError, match="k must be at least 1"):
            top_k_accuracy(np.zeros((1, 4)), np.array([2]), 0)
        with pytest.raises(VocabularyError):
            top_k_accuracy(np.zeros((1, 4)), np.array([4]), 1)
        with pytest.raises(ContractError, match="excluded"):
            top_k_accuracy(np.zeros((1, 4)), np.array([1]), 1)

    def test_label_ranks(self) -> None:
        """Ranks count better-scored candidates and equal-scored smaller ids."""
        scores = np.array([[0.0, 0.0, 3.0, 3.0, 1.0]])
        np.testing.assert_array_equal(label_ranks(scores, np.array([3])), [1])
        np.testing.assert_array_equal(label_ranks(scores, np.array([4])), [2])


class TestEvaluate:
    """Tests for evaluation reports."""

    def test_single_correct_example(self) -> None:
        """One correctly ranked example gives a perfect report."""
        model = FixedScores({3: np.array([0.0, 0.0, 1.0, 2.0])})
        report = evaluate(model, examples([3]))
        assert report.accuracy == {1: 1.0, 3: 1.0}
        assert report.n_examples == 1
        assert report.model == "fixed"

    def test_matches_per_example_oracle(self) -> None:
        """Aggregation equals averaging per-example hits, across batch boundaries."""
        rows = {
            2: np.array([0.0, 0.0, 1.0, 3.0, 2.0, 0.5]),
            3: np.array([0.0, 0.0, 1.0, 3.0, 2.0, 0.5]),
            4: np.array([0.0, 0.0, 1.0, 3.0, 2.0, 0.5]),
            5: np.array([0.0, 0.0, 1.0, 3.0, 2.0, 0.5]),
        }
        report = evaluate(FixedScores(rows), examples([2, 3, 4, 5, 3]), ks=(1, 2, 3), batch_size=2)
        assert report.accuracy[1] == pytest.approx(2 / 5)
        assert report.accuracy[2] == pytest.approx(3 / 5)
        assert report.accuracy[3] == pytest.approx(4 / 5)
        assert report.top1 <= report.top3

    def test_empty_examples(self) -> None:
        with pytest.raises(ContractError, match="empty"):
            evaluate(FixedScores({}), ExampleSet.empty(2, 1))

    def test_report_accuracy_range(self) -> None:
        with pytest.raises(ContractError, match="outside"):
            EvalReport(model="m", n_examples=1, accuracy={1: 1.5})

    def test_report_formats(self, tmp_path: Path) -> None:
        """Reports serialize as JSON and tab-separated text."""
        report = EvalReport(model="txt-abc", n_examples=4, accuracy={3: 0.75, 1: 0.5})
        assert report.to_dict()["accuracy"] == {"top1": 0.5, "top3": 0.75}
        assert '"model": "txt-abc"' in report.to_json()
        path = tmp_path / "eval.txt"
        report.write(path)
        assert path.read_text().splitlines() == [
            "model\tk\taccuracy\tn",
            "txt-abc\t1\t0.500000\t4",
            "txt-abc\t3\t0.750000\t4",
        ]

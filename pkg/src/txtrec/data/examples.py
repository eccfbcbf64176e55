"""Training examples: padded basket prefixes, context ids and next-item labels."""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from datetime import datetime
from typing import overload

import numpy as np

from txtrec.data.records import TransactionRecord, to_naive_utc
from txtrec.data.vocab import VocabSet
from txtrec.errors import ContractError, DimensionError
from txtrec.ids import PAD_ID, RESERVED_IDS
from txtrec.nn.layers import padding_mask, validate_padding_mask
from txtrec.tensor.rng import STREAM_SHUFFLE, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrderExample:
    """One next-item prediction example.

    Attributes:
        input_ids: ``[L]`` item ids, PAD after the real prefix.
        mask: ``[L]`` booleans, True at real positions.
        context: ``[m]`` context ids, one per field.
        label: Id of the item that followed the prefix.
    """

    input_ids: np.ndarray
    mask: np.ndarray
    context: np.ndarray
    label: int

    @property
    def basket(self) -> list[int]:
        return [int(i) for i in self.input_ids[self.mask]]


class ExampleSet(Sequence[OrderExample]):
    """Columnar storage for a list of examples.

    Indexing with an int returns an :class:`OrderExample`; the array
    attributes make the set usable directly as a model batch.
    """

    def __init__(
        self,
        item_ids: np.ndarray,
        mask: np.ndarray,
        context: np.ndarray,
        labels: np.ndarray,
        dropped: int = 0,
    ) -> None:
        """Wrap example arrays after checking their invariants.

        Raises:
            DimensionError: If the array shapes disagree.
            ContractError: If a row has no real item, a gap in its mask, or a
                reserved label.
        """
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        self.mask = np.asarray(mask, dtype=bool)
        self.context = np.asarray(context, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.dropped = dropped
        n = self.labels.shape[0]
        if self.item_ids.ndim != 2 or self.mask.shape != self.item_ids.shape:
            raise DimensionError(
                f"Item ids {self.item_ids.shape} and mask {self.mask.shape} must be equal [N, L]"
            )
        if self.item_ids.shape[0] != n or self.context.ndim != 2 or self.context.shape[0] != n:
            raise DimensionError(
                f"Example arrays disagree on N: ids {self.item_ids.shape}, "
                f"context {self.context.shape}, labels {self.labels.shape}"
            )
        if n:
            validate_padding_mask(self.mask)
            if np.isin(self.labels, RESERVED_IDS).any():
                raise ContractError("Labels must not be PAD or UNK")

    @classmethod
    def empty(cls, seq_len: int, n_context: int) -> ExampleSet:
        return cls(
            np.zeros((0, seq_len), dtype=np.int64),
            np.zeros((0, seq_len), dtype=bool),
            np.zeros((0, n_context), dtype=np.int64),
            np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def from_examples(cls, examples: Sequence[OrderExample], dropped: int = 0) -> ExampleSet:
        if not examples:
            raise ContractError("from_examples needs at least one example")
        return cls(
            np.stack([e.input_ids for e in examples]),
            np.stack([e.mask for e in examples]),
            np.stack([e.context for e in examples]),
            np.array([e.label for e in examples]),
            dropped=dropped,
        )

    @property
    def seq_len(self) -> int:
        return int(self.item_ids.shape[1])

    @property
    def n_context(self) -> int:
        return int(self.context.shape[1])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @overload
    def __getitem__(self, index: int) -> OrderExample: ...

    @overload
    def __getitem__(self, index: slice) -> ExampleSet: ...

    def __getitem__(self, index: int | slice) -> OrderExample | ExampleSet:
        if isinstance(index, slice):
            return self.take(np.arange(len(self))[index])
        return OrderExample(
            input_ids=self.item_ids[index],
            mask=self.mask[index],
            context=self.context[index],
            label=int(self.labels[index]),
        )

    def take(self, indices: np.ndarray | Sequence[int]) -> ExampleSet:
        """Examples at the given positions, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        return ExampleSet(self.item_ids[idx], self.mask[idx], self.context[idx], self.labels[idx])

    @classmethod
    def concat(cls, parts: Sequence[ExampleSet]) -> ExampleSet:
        if not parts:
            raise ContractError("concat needs at least one example set")
        return cls(
            np.concatenate([p.item_ids for p in parts]),
            np.concatenate([p.mask for p in parts]),
            np.concatenate([p.context for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )

    def orders(self) -> list[list[int]]:
        """Each example as its full item sequence: prefix followed by label."""
        return [
            [*map(int, self.item_ids[i][self.mask[i]]), int(self.labels[i])]
            for i in range(len(self))
        ]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "item_ids": self.item_ids,
            "mask": self.mask,
            "context": self.context,
            "labels": self.labels,
        }

    def __repr__(self) -> str:
        return f"ExampleSet(n={len(self)}, seq_len={self.seq_len}, dropped={self.dropped})"


@dataclass(frozen=True)
class OrderBaskets:
    """Complete orders as item ids, for models that count co-occurrence.

    Unlike an :class:`ExampleSet` nothing is truncated or split into
    prefixes: each order appears once with every item it contains.

    Attributes:
        items: One tuple of item ids per order, in add-to-cart order.
        context: ``[N, m]`` context ids, one row per order.
    """

    items: tuple[tuple[int, ...], ...]
    context: np.ndarray

    def __post_init__(self) -> None:
        if self.context.ndim != 2 or self.context.shape[0] != len(self.items):
            raise DimensionError(
                f"{len(self.items)} orders but context of shape {self.context.shape}"
            )

    def __len__(self) -> int:
        return len(self.items)

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat storage: concatenated ids with per-order offsets."""
        lengths = np.array([len(o) for o in self.items], dtype=np.int64)
        flat = [i for order in self.items for i in order]
        return {
            "order_items": np.array(flat, dtype=np.int64),
            "order_offsets": np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
            "order_context": self.context,
        }

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> OrderBaskets:
        flat = np.asarray(arrays["order_items"], dtype=np.int64)
        offsets = np.asarray(arrays["order_offsets"], dtype=np.int64)
        items = tuple(
            tuple(int(i) for i in flat[start:stop])
            for start, stop in zip(offsets[:-1], offsets[1:], strict=True)
        )
        return cls(items, np.asarray(arrays["order_context"], dtype=np.int64))


def encode_orders(records: Sequence[TransactionRecord], vocabs: VocabSet) -> OrderBaskets:
    """Every record as one complete basket; unknown items become UNK."""
    n_context = len(vocabs.schema.fields)
    items = tuple(tuple(vocabs.items.encode_many(r.items)) for r in records)
    rows = [vocabs.encode_context(vocabs.schema.tokens(r)) for r in records]
    context = np.array(rows, dtype=np.int64).reshape(len(rows), n_context)
    return OrderBaskets(items, context)


def _pad(prefix: Sequence[int], seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    kept = list(prefix)[-seq_len:]
    ids = np.full(seq_len, PAD_ID, dtype=np.int64)
    ids[: len(kept)] = kept
    return ids, padding_mask([len(kept)], seq_len)[0]


def encode_basket(
    item_names: Sequence[str], vocabs: VocabSet, seq_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pad or truncate a basket to ``seq_len``, keeping the most recent items.

    Unknown item names become UNK. The basket must not be empty.
    """
    if not item_names:
        raise ContractError("Cannot encode an empty basket")
    return _pad(vocabs.items.encode_many(item_names), seq_len)


def make_examples(
    records: Sequence[TransactionRecord],
    vocabs: VocabSet,
    seq_len: int = 5,
    all_prefixes: bool = False,
) -> ExampleSet:
    """Turn orders into next-item examples.

    For an order of n+1 items the input is the first n items, truncated to
    the most recent ``seq_len``, and the label is the last item. Orders with a
    single item, or whose label is not in the item vocabulary, are dropped
    and counted.

    With ``all_prefixes`` every prefix of length 1..n yields an example,
    labelled with the item that follows it.
    """
    if seq_len < 1:
        raise ContractError(f"seq_len must be positive, got {seq_len}")
    n_context = len(vocabs.schema.fields)
    ids_rows: list[np.ndarray] = []
    mask_rows: list[np.ndarray] = []
    ctx_rows: list[list[int]] = []
    labels: list[int] = []
    dropped = 0
    for record in records:
        ids = vocabs.items.encode_many(record.items)
        if len(ids) < 2:
            dropped += 1
            continue
        ctx = vocabs.encode_context(vocabs.schema.tokens(record))
        cuts = range(1, len(ids)) if all_prefixes else (len(ids) - 1,)
        produced = 0
        for cut in cuts:
            label = ids[cut]
            if label in RESERVED_IDS:
                continue
            row, row_mask = _pad(ids[:cut], seq_len)
            ids_rows.append(row)
            mask_rows.append(row_mask)
            ctx_rows.append(ctx)
            labels.append(label)
            produced += 1
        if produced == 0:
            dropped += 1
    if dropped:
        logger.info("Dropped %d orders without a usable prefix and label", dropped)
    if not labels:
        empty = ExampleSet.empty(seq_len, n_context)
        empty.dropped = dropped
        return empty
    return ExampleSet(
        np.stack(ids_rows),
        np.stack(mask_rows),
        np.array(ctx_rows, dtype=np.int64),
        np.array(labels, dtype=np.int64),
        dropped=dropped,
    )


def batch(examples: ExampleSet, batch_size: int, seed: int) -> Iterator[ExampleSet]:
    """Shuffle with ``seed``, then yield consecutive batches; the last may be short.

    Raises:
        ContractError: If ``batch_size`` is below 1.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be at least 1, got {batch_size}")
    order = make_rng(seed, STREAM_SHUFFLE).permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield examples.take(order[start : start + batch_size])


def split_by_time(
    records: Sequence[TransactionRecord], cutoff: datetime
) -> tuple[list[TransactionRecord], list[TransactionRecord]]:
    """Records strictly before ``cutoff`` and those at or after it."""
    cutoff = to_naive_utc(cutoff)
    before = [r for r in records if r.timestamp < cutoff]
    after = [r for r in records if r.timestamp >= cutoff]
    return before, after

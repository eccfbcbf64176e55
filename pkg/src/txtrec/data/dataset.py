"""Prepared datasets and the on-disk example cache written by ``preprocess``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from txtrec.data.context import ContextSchema
from txtrec.data.examples import (
    ExampleSet,
    OrderBaskets,
    encode_orders,
    make_examples,
    split_by_time,
)
from txtrec.data.records import (
    TransactionRecord,
    newest_timestamp,
    parse_timestamp,
    read_transactions,
)
from txtrec.data.vocab import VocabSet, build_vocabs
from txtrec.errors import ContractError, FormatError

logger = logging.getLogger(__name__)

VOCABS_FILE = "vocabs.yaml"
TRAIN_FILE = "train.npz"
VALID_FILE = "valid.npz"
ORDERS_FILE = "orders.npz"
INFO_FILE = "dataset.yaml"


@dataclass
class Dataset:
    """Training and optional validation examples sharing one vocabulary set.

    Attributes:
        train: Examples built from records before the validation cutoff.
        valid: Examples from records at or after the cutoff, if any.
        vocabs: Vocabularies built from the training records only.
        newest: Latest training order time; used as the default bundle
            creation time so identical inputs give identical bundles.
        skipped: Rows rejected while parsing the source file.
        baskets: The complete training orders, untruncated, for count-based
            models.
    """

    train: ExampleSet
    valid: ExampleSet | None
    vocabs: VocabSet
    newest: datetime | None = None
    skipped: int = 0
    baskets: OrderBaskets | None = None

    @property
    def seq_len(self) -> int:
        return self.train.seq_len

    def save(self, directory: Path) -> None:
        """Write the example cache to ``directory``, creating it if needed."""
        directory.mkdir(parents=True, exist_ok=True)
        (directory / VOCABS_FILE).write_text(
            yaml.safe_dump(self.vocabs.to_dict(), sort_keys=False, allow_unicode=True),
            encoding="utf-8",
        )
        _save_examples(directory / TRAIN_FILE, self.train)
        if self.valid is not None:
            _save_examples(directory / VALID_FILE, self.valid)
        if self.baskets is not None:
            with (directory / ORDERS_FILE).open("wb") as f:
                np.savez(f, **self.baskets.arrays())
        info: dict[str, Any] = {
            "seq_len": self.seq_len,
            "newest": self.newest.isoformat() if self.newest else None,
            "skipped": self.skipped,
            "train_examples": len(self.train),
            "valid_examples": len(self.valid) if self.valid is not None else 0,
            "dropped": self.train.dropped,
        }
        (directory / INFO_FILE).write_text(yaml.safe_dump(info, sort_keys=False), encoding="utf-8")

    @classmethod
    def load(cls, directory: Path) -> Dataset:
        """Read an example cache written by :meth:`save`.

        Raises:
            FormatError: If a cache file is missing or malformed.
        """
        try:
            vocabs = VocabSet.from_dict(
                yaml.safe_load((directory / VOCABS_FILE).read_text(encoding="utf-8"))
            )
            info = yaml.safe_load((directory / INFO_FILE).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError, AttributeError) as e:
            raise FormatError(f"Cannot read dataset cache in {directory}: {e}") from e
        train = _load_examples(directory / TRAIN_FILE)
        train.dropped = int(info.get("dropped", 0))
        valid_path = directory / VALID_FILE
        valid = _load_examples(valid_path) if valid_path.exists() else None
        orders_path = directory / ORDERS_FILE
        baskets = _load_baskets(orders_path) if orders_path.exists() else None
        newest = info.get("newest")
        return cls(
            train=train,
            valid=valid,
            vocabs=vocabs,
            newest=parse_timestamp(str(newest)) if newest else None,
            skipped=int(info.get("skipped", 0)),
            baskets=baskets,
        )


def _save_examples(path: Path, examples: ExampleSet) -> None:
    with path.open("wb") as f:
        np.savez(f, **examples.arrays())


def _load_examples(path: Path) -> ExampleSet:
    try:
        with np.load(path) as data:
            return ExampleSet(data["item_ids"], data["mask"], data["context"], data["labels"])
    except (OSError, KeyError, ValueError) as e:
        raise FormatError(f"Cannot read examples from {path}: {e}") from e


def _load_baskets(path: Path) -> OrderBaskets:
    try:
        with np.load(path) as data:
            return OrderBaskets.from_arrays(data)
    except (OSError, KeyError, ValueError) as e:
        raise FormatError(f"Cannot read orders from {path}: {e}") from e


def prepare_dataset(
    records: list[TransactionRecord],
    seq_len: int = 5,
    min_count: int = 1,
    valid_cutoff: datetime | None = None,
    all_prefixes: bool = False,
    schema: ContextSchema | None = None,
    skipped: int = 0,
) -> Dataset:
    """Split records by time, build vocabularies on the training part and make examples.

    Raises:
        ContractError: If no training record precedes the cutoff.
    """
    if valid_cutoff is not None:
        train_records, valid_records = split_by_time(records, valid_cutoff)
    else:
        train_records, valid_records = records, []
    if not train_records:
        raise ContractError("No training records before the validation cutoff")
    vocabs = build_vocabs(train_records, min_count=min_count, schema=schema)
    train = make_examples(train_records, vocabs, seq_len, all_prefixes=all_prefixes)
    valid = make_examples(valid_records, vocabs, seq_len) if valid_records else None
    logger.info(
        "Prepared %d training and %d validation examples (%d items, seq_len %d)",
        len(train),
        len(valid) if valid is not None else 0,
        len(vocabs.items),
        seq_len,
    )
    return Dataset(
        train=train,
        valid=valid,
        vocabs=vocabs,
        newest=newest_timestamp(train_records),
        skipped=skipped,
        baskets=encode_orders(train_records, vocabs),
    )


def load_dataset(
    path: Path,
    seq_len: int = 5,
    min_count: int = 1,
    valid_cutoff: datetime | None = None,
    all_prefixes: bool = False,
    schema: ContextSchema | None = None,
) -> Dataset:
    """Load a dataset from a transaction CSV file or a ``preprocess`` directory.

    The preparation arguments apply only to CSV input; a cache directory
    already fixes them.
    """
    if path.is_dir():
        return Dataset.load(path)
    parsed = read_transactions(path)
    return prepare_dataset(
        parsed.records,
        seq_len=seq_len,
        min_count=min_count,
        valid_cutoff=valid_cutoff,
        all_prefixes=all_prefixes,
        schema=schema,
        skipped=parsed.skipped,
    )


def examples_for(
    path: Path, vocabs: VocabSet, seq_len: int
) -> ExampleSet:
    """Examples from a CSV file or cache directory, encoded with existing vocabularies.

    A cache directory contributes its validation examples when it has them,
    otherwise its training examples.
    """
    if path.is_dir():
        cached = Dataset.load(path)
        if cached.vocabs.items != vocabs.items:
            raise ContractError(f"Dataset cache {path} was built with a different item vocabulary")
        return cached.valid if cached.valid is not None else cached.train
    return make_examples(read_transactions(path).records, vocabs, seq_len)

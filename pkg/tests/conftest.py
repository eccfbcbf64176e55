"""Pytest configuration and fixtures for txtrec tests."""

from collections.abc import Iterator
from datetime import datetime, timedelta
from pathlib import Path

import pytest

from txtrec.data import (
    Dataset,
    SyntheticSpec,
    TransactionRecord,
    generate_synthetic,
    prepare_dataset,
    write_transactions,
)
from txtrec.models import ContextField, GruConfig, TxTConfig, TxTModel
from txtrec.store import ModelBundle
from txtrec.tensor import precision


@pytest.fixture
def wide_precision() -> Iterator[None]:
    """Run the test in float64."""
    with precision("float64"):
        yield


def tiny_context_fields() -> tuple[ContextField, ...]:
    return (ContextField("hour", 4), ContextField("weather", 3), ContextField("store", 5))


def tiny_txt_config(**overrides: object) -> TxTConfig:
    """V=20, d=8, 2 sequence and 2 context heads, L=5, three context fields."""
    values: dict[str, object] = {
        "item_vocab_size": 20,
        "context_fields": tiny_context_fields(),
        "seq_len": 5,
        "d_embed": 8,
        "seq_heads": 2,
        "ctx_heads": 2,
    }
    values.update(overrides)
    return TxTConfig(**values)  # type: ignore[arg-type]


def tiny_gru_config(**overrides: object) -> GruConfig:
    values: dict[str, object] = {
        "item_vocab_size": 20,
        "context_fields": tiny_context_fields(),
        "seq_len": 5,
        "d_embed": 6,
    }
    values.update(overrides)
    return GruConfig(**values)  # type: ignore[arg-type]


@pytest.fixture
def txt_config() -> TxTConfig:
    return tiny_txt_config()


@pytest.fixture
def gru_config() -> GruConfig:
    return tiny_gru_config()


def make_record(
    order_id: str,
    items: tuple[str, ...],
    when: datetime = datetime(2024, 3, 1, 12, 30),
    weather: str = "Sunny",
    store: str = "store_1",
    region: str = "north",
    temperature: float = 18.0,
) -> TransactionRecord:
    return TransactionRecord(
        order_id=order_id,
        timestamp=when,
        store_id=store,
        region=region,
        weather=weather,
        temperature_c=temperature,
        items=items,
    )


@pytest.fixture
def small_records() -> list[TransactionRecord]:
    """Eight hand-written orders over five items, one hour apart."""
    start = datetime(2024, 3, 1, 8, 0)
    baskets = [
        ("burger", "fries", "cola"),
        ("burger", "cola"),
        ("nuggets", "fries", "cola"),
        ("burger", "fries", "shake"),
        ("salad", "cola"),
        ("burger", "fries", "cola"),
        ("nuggets", "shake"),
        ("burger", "fries", "cola", "shake"),
    ]
    weathers = ["Sunny", "Rain"]
    return [
        make_record(
            f"o{i}",
            basket,
            when=start + timedelta(hours=i),
            weather=weathers[i % 2],
            store=f"store_{i % 3}",
        )
        for i, basket in enumerate(baskets)
    ]


def overfit_spec(**overrides: object) -> SyntheticSpec:
    values: dict[str, object] = {
        "name": "overfit",
        "orders": 200,
        "items": 10,
        "rule": "joint",
        "noise": 0.0,
        "weathers": ("sunny", "rain"),
        "seed": 0,
    }
    values.update(overrides)
    return SyntheticSpec(**values)  # type: ignore[arg-type]


@pytest.fixture
def synthetic_dataset() -> Dataset:
    """200 noise-free joint-rule orders with a time-based validation split."""
    corpus = generate_synthetic(overfit_spec())
    return prepare_dataset(corpus.records, seq_len=5, valid_cutoff=datetime(2024, 11, 1))


@pytest.fixture
def synthetic_csv(tmp_path: Path) -> Path:
    """The synthetic corpus written as a transaction CSV."""
    path = tmp_path / "orders.csv"
    write_transactions(generate_synthetic(overfit_spec()).records, path)
    return path


def dataset_txt_config(dataset: Dataset, **overrides: object) -> TxTConfig:
    """A small TxT sized to a dataset's vocabularies."""
    values: dict[str, object] = {
        "item_vocab_size": len(dataset.vocabs.items),
        "context_fields": dataset.vocabs.context_fields(),
        "seq_len": dataset.seq_len,
        "d_embed": 8,
        "seq_heads": 2,
        "ctx_heads": 2,
    }
    values.update(overrides)
    return TxTConfig(**values)  # type: ignore[arg-type]


@pytest.fixture
def txt_bundle(synthetic_dataset: Dataset) -> ModelBundle:
    """An untrained TxT over the synthetic vocabularies, tagged ``v1``."""
    model = TxTModel(dataset_txt_config(synthetic_dataset), seed=0)
    return ModelBundle.from_model(model, synthetic_dataset.vocabs, version_tag="v1")

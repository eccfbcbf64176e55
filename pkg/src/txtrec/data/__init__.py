"""Transaction ingestion, vocabularies, examples and synthetic corpora."""

from txtrec.data.context import CONTEXT_FIELDS, ContextSchema
from txtrec.data.dataset import Dataset, examples_for, load_dataset, prepare_dataset
from txtrec.data.examples import (
    ExampleSet,
    OrderBaskets,
    OrderExample,
    batch,
    encode_basket,
    encode_orders,
    make_examples,
    split_by_time,
)
from txtrec.data.records import (
    ParseResult,
    RowError,
    TransactionRecord,
    parse_transactions,
    read_transactions,
    write_transactions,
)
from txtrec.data.synthetic import (
    SyntheticCorpus,
    SyntheticSpec,
    generate_synthetic,
    list_presets,
    load_preset,
    load_synthetic_spec,
    resolve_spec,
)
from txtrec.data.vocab import VocabSet, Vocabulary, build_vocabs

__all__ = [
    "CONTEXT_FIELDS",
    "ContextSchema",
    "Dataset",
    "ExampleSet",
    "OrderBaskets",
    "OrderExample",
    "ParseResult",
    "RowError",
    "SyntheticCorpus",
    "SyntheticSpec",
    "TransactionRecord",
    "VocabSet",
    "Vocabulary",
    "batch",
    "build_vocabs",
    "encode_basket",
    "encode_orders",
    "examples_for",
    "generate_synthetic",
    "list_presets",
    "load_dataset",
    "load_preset",
    "load_synthetic_spec",
    "make_examples",
    "parse_transactions",
    "prepare_dataset",
    "read_transactions",
    "resolve_spec",
    "split_by_time",
    "write_transactions",
]

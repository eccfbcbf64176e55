"""Versioned model persistence."""

from txtrec.store.bundle import (
    FORMAT_VERSION,
    MAGIC,
    ModelBundle,
    format_human_readable,
)
from txtrec.store.registry import ModelStore, StoreEntry

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "ModelBundle",
    "ModelStore",
    "StoreEntry",
    "format_human_readable",
]

"""Run-wide numeric precision mode.

Precision is a property of the whole run, not of individual tensors:
``float32`` (standard) for training speed, ``float64`` (wide) for gradient
checks and equivalence tests.
"""

from collections.abc import Iterator
from contextlib import contextmanager

import numpy as np

from txtrec.errors import ConfigError

PRECISIONS: dict[str, type[np.floating]] = {
    "float32": np.float32,
    "float64": np.float64,
}

_current = "float32"


def get_precision() -> str:
    """Return the active precision name ("float32" or "float64")."""
    return _current


def get_dtype() -> np.dtype[np.floating]:
    """Return the numpy dtype of the active precision."""
    return np.dtype(PRECISIONS[_current])


def set_precision(name: str) -> None:
    """Switch the run to another precision mode.

    Raises:
        ConfigError: If the name is not a known precision.
    """
    global _current
    if name not in PRECISIONS:
        raise ConfigError(f"Unknown precision {name!r} (expected one of {sorted(PRECISIONS)})")
    _current = name


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch precision, restoring the previous mode on exit."""
    previous = _current
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)

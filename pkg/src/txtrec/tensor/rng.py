"""Seedable, counter-based random number generation.

All randomness in txtrec comes from numpy's Philox-4x64 bit generator, a
counter-based algorithm whose output depends only on (key, counter), so a
seed reproduces the same stream on every platform. Independent streams for
different purposes (initialization, shuffling, synthetic data) are derived
from one seed by giving each purpose its own stream id.
"""

import numpy as np

# Stream ids keep purposes apart even when they share a seed.
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_SYNTHETIC = 2
STREAM_GRADCHECK = 3


def make_rng(seed: int, stream: int = STREAM_INIT) -> np.random.Generator:
    """Create a Philox generator for a seed and stream id.

    Args:
        seed: Non-negative run seed.
        stream: Purpose id; different ids give independent streams.

    Returns:
        A numpy Generator backed by Philox.
    """
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    key = (seed << 16) | (stream & 0xFFFF)
    return np.random.Generator(np.random.Philox(key=key))

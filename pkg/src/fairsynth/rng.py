"""Seeded random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from a base seed plus a tuple of stream labels, for example
``stream(7, "measure", 3)``. Streams with different labels are independent
and a stream's output does not depend on which other streams were used.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("stream labels must be nonnegative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Philox generator for ``seed`` and the stream ``labels``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(lab) for lab in labels))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed) -> np.random.Generator:
    """Accept a Generator, an int, a (seed, *labels) tuple, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    if isinstance(seed, tuple):
        return stream(*seed)
    return stream(int(seed))

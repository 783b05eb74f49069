"""Keyed random streams.

Every stochastic consumer asks for its own generator keyed by
``(seed, label, *index)``.  Streams are built on Philox (counter based), so
two consumers never share state and any single draw can be re-derived in
isolation.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, *index: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, label, *index)``."""
    key = [int(seed) & _MASK64, label_key(label)]
    for i in index:
        if i < 0:
            raise ValueError(f"stream index must be non-negative, got {i}")
        key.append(int(i))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))

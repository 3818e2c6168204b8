"""Keyed counter-based random streams.

Every stream is a Philox generator whose key is derived from the global
seed plus a tuple of labels/indices (e.g. ``("chain", chain_id, step)``).
Draws for a given key never depend on how many other streams were used
before, so ensembles are reproducible regardless of evaluation order.
"""
from __future__ import annotations

import zlib

import numpy as np


def _word(x) -> int:
    if isinstance(x, str):
        return zlib.crc32(x.encode())
    x = int(x)
    if x < 0:
        raise ValueError("stream indices must be non-negative")
    return x


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_word(k) for k in key))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))

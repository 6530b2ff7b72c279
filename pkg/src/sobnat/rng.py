"""Named random streams derived from a single 64-bit seed.

Every source of randomness in a run flows from one seed through a named
splitter so that e.g. weight init is identical across optimizer variants
that shuffle differently.  Stream names hash through crc32, which is stable
across processes (unlike the builtin hash).
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))

"""Named, independent random streams derived from one integer seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("data", "split", "init", "dropout", "shuffle")


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    key = [int(seed), zlib.crc32(name.encode()), *map(int, extra)]
    return np.random.default_rng(np.random.SeedSequence(key))

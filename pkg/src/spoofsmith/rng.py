"""Deterministic, splittable random streams.

Every stochastic operation in the package draws from a stream derived from
an explicit u64 seed plus a path of integers (and optionally strings), so
the same (seed, path) always yields the same values regardless of call
order elsewhere in the program.
"""

import zlib

import numpy as np


def _as_word(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFFFFFFFFFF


def stream(seed: int, *path) -> np.random.Generator:
    """Return an independent Generator for (seed, *path).

    Path components may be ints or strings; strings are hashed with crc32.
    """
    words = [_as_word(seed)] + [_as_word(p) for p in path]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

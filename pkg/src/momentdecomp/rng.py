"""Counter-based, splittable random streams.

Every stream is a Philox generator whose 64-bit key is derived from
``(seed, term, chunk_start)`` by chained SplitMix64 finalization::

    key = mix(mix(mix(seed) ^ term) ^ chunk_start)

    mix(x):  z = x + 0x9E3779B97F4A7C15           (mod 2**64)
             z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)

A chunk's draws depend only on its key and on the counter, so chunks can be
generated in any order or in parallel with identical results.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
CHUNK_SIZE = 4096


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream_key(seed: int, term: int, chunk_start: int) -> int:
    return splitmix64(splitmix64(splitmix64(check_seed(seed)) ^ term) ^ chunk_start)


def stream(seed: int, term: int, chunk_start: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, term, chunk_start)))


def chunks(n: int, size: int = CHUNK_SIZE):
    """``(start, count)`` pairs covering ``range(n)`` in fixed-size chunks."""
    for start in range(0, n, size):
        yield start, min(size, n - start)

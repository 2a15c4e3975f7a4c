"""Deterministic seed derivation.

All randomness is drawn from numpy's Philox counter-based generator keyed by
a `SeedSequence`. Child seeds are addressed by a path of small integers so any
worker can rebuild the stream for one block without touching the others.
"""

from typing import Sequence

import numpy as np

UINT64_MAX = np.iinfo(np.uint64).max


def derive_seed(seed: int, *path: int) -> int:
    """64-bit child seed for `path` under `seed`"""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def philox(seed: int, *path: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def random_uint64(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, UINT64_MAX, size=size, dtype=np.uint64, endpoint=True)


def block_ranges(total: int, block_size: int) -> Sequence[range]:
    return [range(start, min(start + block_size, total)) for start in range(0, total, block_size)]

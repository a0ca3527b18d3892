"""Counter-based random streams (Philox4x64) with documented replica derivation.

A 64-bit master seed expands to independent per-replica streams through the
Philox key: key = master_seed + (replica_index << 64).  The master seed
occupies the low key word and the replica index the high word, so streams for
distinct (seed, replica) pairs never collide.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox4x64"
_MASK64 = (1 << 64) - 1


def replica_key(master_seed: int, replica: int = 0) -> int:
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master seed must fit in 64 bits")
    if replica < 0:
        raise ValueError("replica index must be non-negative")
    return (master_seed & _MASK64) + (replica << 64)


def bit_generator(master_seed: int, replica: int = 0) -> np.random.Philox:
    return np.random.Philox(key=replica_key(master_seed, replica))


def generator(master_seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(bit_generator(master_seed, replica))

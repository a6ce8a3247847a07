"""Deterministic seed derivation.

Every stochastic component in the package draws from a Generator whose seed
is mixed from integer parts with ``derive_seed``.  The mixing is the
documented SeedSequence hash, so results are stable across runs, platforms,
and execution schedules.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def derive_seed(*parts: int) -> int:
    """Mix integer parts (negatives allowed) into one 64-bit seed."""
    entropy = [int(p) & _MASK for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def make_rng(*parts: int) -> np.random.Generator:
    """A fresh PCG64 Generator seeded from the mixed parts."""
    return np.random.default_rng(derive_seed(*parts))

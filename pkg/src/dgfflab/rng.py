"""Counter-based random streams.

Every stream is a Philox generator keyed by a :class:`numpy.random.SeedSequence`,
so a trial's randomness depends only on ``(master, cell, trial)`` and never on
which worker ran it or in what order.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & MASK64)))


def trial_seed(master: int, cell: int, trial: int) -> int:
    """64-bit seed for one trial, a pure function of its coordinates."""
    ss = np.random.SeedSequence(entropy=int(master) & MASK64, spawn_key=(int(cell), int(trial)))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def trial_rng(master: int, cell: int, trial: int) -> np.random.Generator:
    return make_rng(trial_seed(master, cell, trial))

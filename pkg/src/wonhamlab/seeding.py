"""Deterministic per-trial random streams.

Trial i of a Monte Carlo experiment draws from a counter-based Philox
generator keyed by (master_seed, i), so any subset of trials can be
reproduced independently and trials are safe to run in any order.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2 ** 64 - 1


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return seed


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Generator for one trial: Philox keyed by (master_seed, trial_index)."""
    master_seed = check_seed(master_seed)
    if trial_index < 0:
        raise ValueError(f"trial index must be >= 0, got {trial_index}")
    bitgen = np.random.Philox(key=np.array([master_seed, trial_index], dtype=np.uint64))
    return np.random.Generator(bitgen)

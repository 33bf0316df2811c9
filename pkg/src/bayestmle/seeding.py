"""Counter-based seed derivation shared by the generators, estimators and harness."""

from __future__ import annotations

import numpy as np

__all__ = ["child_seed"]


def child_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit seed for the stream at ``key`` under ``seed``.

    Distinct keys give independent ``SeedSequence`` streams, so adding a new
    consumer never shifts the seeds of existing ones.
    """
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(2)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)

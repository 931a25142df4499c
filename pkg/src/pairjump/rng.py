"""Counter-based random number streams for reproducible parallel ensembles.

Every trajectory draws its randomness from Philox streams keyed by
(master seed, trajectory index, role), so the numbers a trajectory sees
depend only on the seed and its index, never on scheduling, worker count
or chunking.  Roles keep the two jump branches and the initial bath
sampling on disjoint streams.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

ROLE_BRANCH1 = 0
ROLE_BRANCH2 = 1
ROLE_INIT = 2

_MASK64 = (1 << 64) - 1


def stream(seed: int, trajectory: int, role: int) -> Generator:
    """Return the Generator for one (seed, trajectory, role) triple."""
    if not 0 <= role < 4:
        raise ValueError(f"role must be in 0..3, got {role}")
    if trajectory < 0:
        raise ValueError("trajectory index must be nonnegative")
    key = np.array([seed & _MASK64, ((trajectory << 2) | role) & _MASK64],
                   dtype=np.uint64)
    return Generator(Philox(key=key))


def branch_streams(seed: int, trajectory: int) -> tuple[Generator, Generator]:
    """Disjoint streams for the two branches of one trajectory pair."""
    return (stream(seed, trajectory, ROLE_BRANCH1),
            stream(seed, trajectory, ROLE_BRANCH2))

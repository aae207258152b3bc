"""Counter-based random-number streams.

Every stochastic component derives an independent Philox stream from a
user seed plus a structural key (a domain constant and indices such as
subject number or bootstrap replicate). Results are therefore
bit-reproducible and independent of worker scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "derived_seed"]

DOMAIN_IMPUTE = 1
DOMAIN_BOOTSTRAP = 2
DOMAIN_SIMULATION = 3
DOMAIN_ORACLE = 4
DOMAIN_NAIVE = 5
DOMAIN_CONFIG = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the given seed and structural key."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def derived_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for nested components."""
    return int(stream(seed, *key).integers(0, 2**62))

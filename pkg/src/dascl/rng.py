"""Seeded random number generation.

Every stochastic component builds its own generator from an explicit seed;
nothing reads global RNG state. Philox is counter-based, so streams derived
from distinct key tuples never collide.
"""

import numpy as np

# Namespacing constants for derived streams, so e.g. the shuffle stream and
# the augmentation stream of one training run cannot overlap.
STREAM_SHUFFLE = 101
STREAM_AUGMENT = 102
STREAM_INIT = 103
STREAM_SPLIT = 104
STREAM_PROBE = 105
STREAM_CALIBRATE = 106
STREAM_DATA = 107


def make_rng(*key: int) -> np.random.Generator:
    """Philox generator keyed by one or more non-negative integers."""
    if not key:
        raise ValueError("make_rng needs at least one seed component")
    seq = np.random.SeedSequence(list(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def draw_seed(rng: np.random.Generator) -> int:
    """Fresh 63-bit seed for a derived component."""
    return int(rng.integers(0, 2**63 - 1))

"""Deterministic RNG stream derivation.

Every random draw in the package comes from a numpy Generator derived
from a 64-bit master seed plus an integer path, so any component can be
re-run in isolation (or in parallel) and reproduce the same stream.
"""

import numpy as np


def stream(seed, *path):
    """Generator for (seed, *path); same arguments give the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))

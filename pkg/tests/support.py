"""Helpers shared by the test modules."""
import functools

import numpy as np

from capax.oracle import generate_certified_kernel


@functools.lru_cache(maxsize=None)
def certified(n, seed):
    """Certified matrix kernel, memoized across tests."""
    return generate_certified_kernel(n, seed)


def random_subset(rng, n, min_size=1):
    if not 0 <= min_size <= n:
        raise ValueError("min_size must lie in [0, n]")
    while True:
        flags = rng.random(n) < rng.uniform(0.2, 0.9)
        if flags.sum() >= min_size:
            return np.flatnonzero(flags)

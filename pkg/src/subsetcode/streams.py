"""Seed-derived random streams.

Every random draw in the package comes from a stream identified by the
64-bit master seed plus a key path of non-negative integers, e.g.
``(CODEBOOK, block)`` or ``(SUBSET, subset_id)``.  The derivation is

    np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=key)))

so a given (seed, key) always yields the same bit stream no matter which
worker consumes it or in which order.
"""

import numpy as np

# Top-level key namespaces.
CODEBOOK = 1
SUBSET = 2
SOURCE = 3
CHANNEL = 4
PERTURB = 5
LEMMA1 = 6
MISC = 7

MAX_SEED = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def stream(seed, *key):
    """Return the generator for ``(seed, key...)``."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))

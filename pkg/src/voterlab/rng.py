"""Seed derivation for reproducible, order independent sampling.

Every cycle of an extended trace draws from its own Philox stream whose key
comes from the master seed and the cycle index through splitmix64.  A cycle
therefore produces the same states whatever worker runs it and in whatever
order.
"""
import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x):
    """One splitmix64 output for the 64-bit state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master, *path):
    """Mix ``master`` with a path of integers into a 64-bit key."""
    s = splitmix64(int(master) & _MASK)
    for p in path:
        s = splitmix64(s ^ (int(p) & _MASK))
    return s


def stream(master, *path):
    """Generator on a Philox stream keyed by ``derive_seed(master, *path)``."""
    key = derive_seed(master, *path)
    return np.random.Generator(np.random.Philox(key=[key, splitmix64(key)]))


def as_generator(rng):
    """Accept a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)

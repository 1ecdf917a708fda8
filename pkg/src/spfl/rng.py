"""Seeded random streams keyed by (seed, repetition, round, device, purpose)."""

from __future__ import annotations

import numpy as np

# purpose tags keep independent streams apart for the same (round, device)
QUANTIZE = 1
SIGN_PACKET = 2
MODULUS_PACKET = 3
FADING = 4
BASELINE_PACKET = 5
DATA = 6
LAYOUT = 7
INIT = 8

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one (seed, keys...) tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> np.uint64(31))


def counter_uniform(seed: int, *keys, index) -> np.ndarray:
    """Uniform [0, 1) draws that depend only on (seed, keys, index).

    A stateless hash (splitmix64 finalizer chained over the key tuple), so the
    value for one index never depends on how many other indices are drawn.
    """
    idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    with np.errstate(over="ignore"):
        h = _splitmix64(np.full(idx.shape, np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)))
        for key in keys:
            h = _splitmix64(h ^ np.uint64(int(key) & 0xFFFFFFFFFFFFFFFF))
        h = _splitmix64(h ^ idx)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

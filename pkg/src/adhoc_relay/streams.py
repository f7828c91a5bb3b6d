"""Deterministic random-stream derivation.

Every random quantity in the package is drawn from a generator keyed by a
tuple of non-negative integers, e.g. ``(seed, realization_index)``.  The
keys are fed to :class:`numpy.random.SeedSequence`, so streams for different
keys are statistically independent and a given key always reproduces the
same stream, whatever process or worker evaluates it.
"""

from __future__ import annotations

import numpy as np

# Stream tags.  Appended to the key tuple to separate uses of one realization.
TAG_REALIZATION = 0
TAG_TRUTH = 1
TAG_SO_INNER = 2
TAG_QTABLE = 3
TAG_TUNE = 4
TAG_NETSIM = 5
TAG_ORACLE = 6


def stream(*keys: int) -> np.random.Generator:
    """Return the generator for the given key path."""
    if not keys:
        raise ValueError("at least one key is required")
    for k in keys:
        if int(k) != k or k < 0:
            raise ValueError(f"stream keys must be non-negative integers, got {k!r}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer usable as a key for a nested stream."""
    return int(rng.integers(0, 2**63 - 1))

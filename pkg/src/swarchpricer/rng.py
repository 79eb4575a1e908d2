"""Seed handling.

Splitting rule: every derived stream is ``default_rng(SeedSequence([seed,
*key]))`` where ``key`` is a tuple of small non-negative integers naming
the consumer (path index, sample index, scenario order, ...).  Identical
(seed, key) pairs always yield identical streams, so parallel workers can
draw independently without sharing generator state.
"""

from __future__ import annotations

import numpy as np


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key) under the splitting rule."""
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Pass through generators, otherwise seed a fresh one."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)

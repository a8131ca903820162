"""Seed derivation.

Every random stream is a child of a root seed addressed by an integer key
path, so any replication can be regenerated in isolation and results do not
depend on the order in which workers pick up tasks.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child(seed, *key: int) -> np.random.SeedSequence:
    """SeedSequence for ``key`` below ``seed`` (an int or a SeedSequence)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def generator(seed, *key: int) -> np.random.Generator:
    return np.random.default_rng(child(seed, *key))


def cell_hash(label: str) -> int:
    """Stable 32-bit hash of an experiment-cell label (blake2b, not ``hash()``)."""
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=4).digest(), "little")


def replication_seed(root: int, cell_label: str, rep: int) -> np.random.SeedSequence:
    return child(root, cell_hash(cell_label), rep)

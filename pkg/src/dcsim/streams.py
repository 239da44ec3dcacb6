"""Deterministic random-stream derivation.

Every stochastic component draws from its own numpy Generator, derived
from a master seed plus a tuple of context tags (purpose, user id, day,
density index, ...).  Two streams with different tags are statistically
independent; the same tags always reproduce the same stream.
"""

import hashlib

import numpy as np


def _tag_to_int(tag) -> int:
    digest = hashlib.sha256(repr(tag).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(master_seed: int, *tags) -> np.random.SeedSequence:
    """SeedSequence for (master_seed, tags); stable across processes."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(_tag_to_int(t) for t in tags)
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    """Independent Generator for (master_seed, tags)."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master_seed, *tags)))

"""Deterministic RNG derivation.

Every random decision in the library flows from an explicit seed plus a chain
of context keys (experiment name, cell coordinates, run index, ...), so results
never depend on scheduling order or global RNG state.
"""

import hashlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def seed_sequence(*keys):
    """Build a SeedSequence from a seed plus arbitrary context keys."""
    if not keys:
        raise ValueError("at least one key is required")
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def derive_rng(*keys):
    """Generator seeded by the key chain; same keys -> same stream."""
    return np.random.default_rng(seed_sequence(*keys))


def derive_seed(*keys):
    """32-bit integer seed for APIs that take a plain seed."""
    return int(seed_sequence(*keys).generate_state(1)[0])

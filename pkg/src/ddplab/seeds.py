"""Labeled derivation of random substreams from one master seed.

Every stage of an experiment owns a stream derived as
``rng_from_label(master_seed, "stage/detail")``.  Labels are hashed with
SHA-256, so adding a new stage never perturbs the randomness of existing
ones, and the derivation is stable across platforms and processes.
"""

import hashlib

import numpy as np


def seed_from_label(master_seed: int, label: str) -> int:
    """Map (master seed, label) to a 64-bit seed, stably."""
    digest = hashlib.sha256(f"{master_seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_from_label(master_seed: int, label: str) -> np.random.Generator:
    """A dedicated generator for one labeled stage."""
    return np.random.default_rng(seed_from_label(master_seed, label))

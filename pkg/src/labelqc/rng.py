"""Deterministic random substreams.

Every randomized operation takes an explicit 64-bit seed. Independent
substreams are derived by hashing (seed, purpose, index) so that adding a new
consumer never shifts the draws of an existing one.
"""

import hashlib

import numpy as np


def substream_seed(seed: int, purpose: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{seed}:{purpose}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Generator for one named substream of `seed`."""
    return np.random.default_rng(substream_seed(seed, purpose, index))

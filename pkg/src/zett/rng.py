"""Seed fan-out: one global seed, independent per-module streams.

Streams are derived from (seed, sha256(name)) with the counter-based
Philox generator, so adding or reordering modules never perturbs the
randomness of the others.
"""

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, tag]))

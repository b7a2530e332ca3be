"""Seed derivation: every structure draws randomness from (root seed, tags).

Sub-seeds are derived with a keyed hash so that independent structures get
independent streams and reruns with the same root seed are bit-identical.
"""

from __future__ import annotations

import hashlib
import random

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *tags) -> int:
    """64-bit sub-seed for (root, tags); stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root) & _MASK64).encode())
    for t in tags:
        h.update(b"\x1f")
        h.update(str(t).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(root: int, *tags) -> random.Random:
    return random.Random(derive_seed(root, *tags))


def make_np_rng(root: int, *tags) -> np.random.Generator:
    # Philox is counter-based: cheap to spawn many independent streams.
    return np.random.Generator(np.random.Philox(key=derive_seed(root, *tags)))

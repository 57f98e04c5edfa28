"""Deterministic sub-seed derivation.

Every random draw in a run comes from a generator seeded by
``derive_seed(master, *labels)``: the master seed and a path of purpose
labels are hashed (BLAKE2b) into a 64-bit integer. The derivation depends on
nothing but its arguments, so results do not change with worker count,
platform or call order.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, *labels: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master & MASK64).to_bytes(8, "little"))
    for lab in labels:
        h.update(b"\x1f")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))

"""Splittable seeding.

Every random draw in the package comes from a generator seeded by
``derive_seed(master, *keys)``: a BLAKE2b hash of the master seed and a
path of keys (stage name, class code, round index, ROI id, ...). Sub-streams
are therefore independent of call order, which is what makes per-ROI and
per-round work safe to run in any order or in parallel.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master) & MASK64).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))

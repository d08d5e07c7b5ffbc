"""Hierarchical seeding.

Every random draw is keyed by a path ``(master, stage, run, draw...)``
hashed with BLAKE2b, so one stage can be replayed without replaying the
stages before it.
"""
import hashlib

import numpy as np


def derive_seed(master, *labels):
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest(), "little") >> 1  # keep it a positive int63


def rng_for(master, *labels):
    return np.random.default_rng(derive_seed(master, *labels))

"""Order-independent random stream derivation.

Every stream is keyed by a tuple of (int | str) parts hashed with SHA-256,
so identity ``i`` of a batch gets the same stream no matter which worker
builds it or in which order.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*keys: int | str) -> int:
    """Return a 64-bit unsigned seed derived from ``keys``."""
    h = hashlib.sha256()
    for k in keys:
        if isinstance(k, bool) or not isinstance(k, (int, str, np.integer)):
            raise TypeError(f"seed keys must be int or str, got {type(k).__name__}")
        tag = b"i" if not isinstance(k, str) else b"s"
        h.update(tag + str(int(k) if tag == b"i" else k).encode() + b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(*keys: int | str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*keys)))


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))

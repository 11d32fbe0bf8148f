"""Stable hashing primitives.

Everything downstream (dedup signatures, feature hashing, sampling
decisions) must be reproducible across runs, machines, and worker
counts, so nothing here may depend on PYTHONHASHSEED or process state.
"""
from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def stable_hash64(data: bytes | str, seed: int = 0) -> int:
    """64-bit hash, stable across processes and platforms."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8, key=key).digest(), "little")


def stable_digest(data: bytes | str, size: int = 16) -> bytes:
    """Collision-resistant digest used as an exact-match key."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.blake2b(data, digest_size=size).digest()


def decision_fraction(key: str, seed: int) -> float:
    """Uniform value in [0, 1) derived only from (key, seed).

    Used for keep/drop coin flips so the outcome is independent of
    document order and shard assignment.
    """
    return stable_hash64(key, seed) / 2.0**64


@lru_cache(maxsize=1 << 20)
def token_hash(token: str) -> int:
    """Cached stable hash for a single token; vocabularies are Zipfian."""
    return stable_hash64(token)


def mix64(arr: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; bijective on uint64."""
    z = arr.astype(np.uint64, copy=True)
    z += _GOLDEN
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def mix64_scalar(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return z

"""Signed feature hashing over word unigrams and bigrams.

One shared featurizer backs the quality, safety, and coherence scorers:
tokens of the dedup-normalized text are hashed into a power-of-two
space, the hash's top bit picks the sign, and the vector is
L2-normalized. Everything is deterministic across runs and platforms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus_io import dedup_normalize
from .hashing import stable_hash64
from .segmentation import split_words

DEFAULT_DIMENSION = 1 << 20

# joins bigram words before hashing; never appears inside a word
_GRAM_SEP = "\x1f"


@dataclass(frozen=True)
class HashedFeatureVector:
    """Sparse L2-normalized vector: sorted unique indices with weights."""

    dimension: int
    indices: np.ndarray  # int64, strictly increasing
    weights: np.ndarray  # float64, no zeros

    @property
    def is_zero(self) -> bool:
        return len(self.indices) == 0

    def dot(self, other: "HashedFeatureVector") -> float:
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        i = j = 0
        total = 0.0
        a_idx, b_idx = self.indices, other.indices
        a_w, b_w = self.weights, other.weights
        while i < len(a_idx) and j < len(b_idx):
            if a_idx[i] == b_idx[j]:
                total += a_w[i] * b_w[j]
                i += 1
                j += 1
            elif a_idx[i] < b_idx[j]:
                i += 1
            else:
                j += 1
        return total

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension, dtype=np.float64)
        dense[self.indices] = self.weights
        return dense


def clipped_cosine(a: HashedFeatureVector, b: HashedFeatureVector) -> float:
    """Cosine of two unit vectors, clipped into [0, 1].

    Hashed features are signed, so the raw cosine may be negative; the
    coherence rule treats any non-positive similarity as zero.
    """
    if a.is_zero or b.is_zero:
        return 0.0
    return min(max(a.dot(b), 0.0), 1.0)


def _grams(text: str) -> list[str]:
    words = split_words(dedup_normalize(text))
    grams = list(words)
    grams.extend(
        words[i] + _GRAM_SEP + words[i + 1] for i in range(len(words) - 1)
    )
    return grams


def featurize(text: str, dimension: int = DEFAULT_DIMENSION) -> HashedFeatureVector:
    """Hash word 1-,2-grams into a signed, L2-normalized sparse vector."""
    if dimension <= 0 or dimension & (dimension - 1):
        raise ValueError(f"dimension must be a power of two, got {dimension}")
    grams = _grams(text)
    if not grams:
        return HashedFeatureVector(
            dimension,
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )
    hashes = np.fromiter(
        (stable_hash64(g) for g in grams), dtype=np.uint64, count=len(grams)
    )
    idx = (hashes & np.uint64(dimension - 1)).astype(np.int64)
    signs = np.where((hashes >> np.uint64(63)) != 0, -1.0, 1.0)
    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    sign_sorted = signs[order]
    uniq, starts = np.unique(idx_sorted, return_index=True)
    sums = np.add.reduceat(sign_sorted, starts)
    nz = sums != 0.0
    uniq, sums = uniq[nz], sums[nz]
    norm = float(np.sqrt(np.sum(sums * sums)))
    if norm == 0.0:
        return HashedFeatureVector(
            dimension,
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )
    return HashedFeatureVector(dimension, uniq, sums / norm)

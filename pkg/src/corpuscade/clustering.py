"""Semantic clustering and cluster-level quality exclusion.

Documents are vectorized as TF-IDF over hashed word uni+bigrams, grouped
by spherical k-means (cosine assignment, k-means++ seeding), and whole
clusters are kept or dropped by their mean document quality score, with
a manual override file taking final say.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import MissingScores, ModelFormatError, TooFewPoints
from .features import DEFAULT_DIMENSION, _grams
from .hashing import stable_hash64

_FORMAT = "corpuscade-centroids"
_TFIDF_FORMAT = "corpuscade-tfidf"
_VERSION = 1

DEFAULT_CLUSTER_QUALITY_MIN = 0.3

KEEP = "keep"
DROP = "drop"


def default_k(corpus_size: int) -> int:
    return min(1024, max(16, corpus_size // 10_000))


@dataclass
class TfidfModel:
    dimension: int
    corpus_size: int
    doc_freq: dict[int, int]  # hashed index -> number of docs containing it

    def idf(self, index: int) -> float:
        df = self.doc_freq.get(index, 0)
        return math.log((1 + self.corpus_size) / (1 + df)) + 1.0

    def transform(self, text: str) -> sparse.csr_matrix:
        """One L2-normalized TF-IDF row; empty text gives an all-zero row."""
        counts: dict[int, int] = {}
        for gram in _grams(text):
            idx = int(stable_hash64(gram) & (self.dimension - 1))
            counts[idx] = counts.get(idx, 0) + 1
        if not counts:
            return sparse.csr_matrix((1, self.dimension), dtype=np.float64)
        idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
        w = np.array([counts[i] * self.idf(i) for i in idx], dtype=np.float64)
        norm = float(np.sqrt(np.dot(w, w)))
        if norm > 0:
            w /= norm
        return sparse.csr_matrix(
            (w, idx, np.array([0, len(idx)])), shape=(1, self.dimension)
        )

    def transform_corpus(self, texts: Iterable[str]) -> sparse.csr_matrix:
        rows = [self.transform(t) for t in texts]
        if not rows:
            return sparse.csr_matrix((0, self.dimension), dtype=np.float64)
        return sparse.vstack(rows, format="csr")

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _TFIDF_FORMAT,
            "version": _VERSION,
            "dimension": self.dimension,
            "corpus_size": self.corpus_size,
            "doc_freq": {str(k): v for k, v in self.doc_freq.items()},
        }
        Path(path).write_text(json.dumps(rec), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TfidfModel":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _TFIDF_FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_TFIDF_FORMAT} v{_VERSION} file: {path}")
        return cls(
            dimension=rec["dimension"],
            corpus_size=rec["corpus_size"],
            doc_freq={int(k): v for k, v in rec["doc_freq"].items()},
        )


def fit_tfidf(texts: Sequence[str], dimension: int = DEFAULT_DIMENSION) -> TfidfModel:
    if dimension <= 0 or dimension & (dimension - 1):
        raise ValueError(f"dimension must be a power of two, got {dimension}")
    doc_freq: dict[int, int] = {}
    for text in texts:
        seen = {
            int(stable_hash64(g) & (dimension - 1)) for g in _grams(text)
        }
        for idx in seen:
            doc_freq[idx] = doc_freq.get(idx, 0) + 1
    return TfidfModel(dimension=dimension, corpus_size=len(texts), doc_freq=doc_freq)


@dataclass
class Centroids:
    """L2-normalized spherical k-means centroids in the hashed space."""

    dimension: int
    matrix: sparse.csr_matrix  # k x dimension
    seed: int
    iterations: int
    inertia: float

    @property
    def k(self) -> int:
        return int(self.matrix.shape[0])

    def save(self, path: str | Path) -> None:
        meta = {
            "format": _FORMAT,
            "version": _VERSION,
            "dimension": self.dimension,
            "k": self.k,
            "seed": self.seed,
            "iterations": self.iterations,
            "inertia": self.inertia,
        }
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh,
                data=self.matrix.data,
                indices=self.matrix.indices,
                indptr=self.matrix.indptr,
                meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
            )

    @classmethod
    def load(cls, path: str | Path) -> "Centroids":
        try:
            bundle = np.load(path)
        except Exception as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        with bundle:
            try:
                meta = json.loads(bytes(bundle["meta"]).decode("utf-8"))
                data, indices, indptr = (
                    bundle["data"], bundle["indices"], bundle["indptr"],
                )
            except KeyError as exc:
                raise ModelFormatError(f"missing field in {path}: {exc}") from exc
        if meta.get("format") != _FORMAT or meta.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        matrix = sparse.csr_matrix(
            (data, indices, indptr), shape=(meta["k"], meta["dimension"])
        )
        return cls(
            dimension=meta["dimension"],
            matrix=matrix,
            seed=meta["seed"],
            iterations=meta["iterations"],
            inertia=meta["inertia"],
        )


def _normalize_rows(m: sparse.csr_matrix) -> sparse.csr_matrix:
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sparse.diags(scale) @ m


def _compact(x: sparse.csr_matrix) -> tuple[sparse.csc_matrix, np.ndarray]:
    """Restrict to observed columns so centroid math stays small."""
    cols = np.unique(x.indices) if x.nnz else np.array([0], dtype=x.indices.dtype)
    lookup = np.zeros(x.shape[1], dtype=np.int64)
    lookup[cols] = np.arange(len(cols))
    compacted = sparse.csr_matrix(
        (x.data, lookup[x.indices], x.indptr), shape=(x.shape[0], len(cols))
    )
    return compacted, cols


def fit_kmeans(
    vectors: sparse.csr_matrix,
    k: int,
    max_iters: int = 50,
    seed: int = 0,
) -> Centroids:
    """Spherical k-means over unit rows; deterministic for a fixed seed.

    Inertia (sum of 1 - cosine to the assigned centroid) never increases
    across iterations; empty clusters retain their previous centroid.
    """
    x = _normalize_rows(sparse.csr_matrix(vectors))
    n, dim = x.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    row_keys = {
        stable_hash64(
            x.indices[x.indptr[i] : x.indptr[i + 1]].tobytes()
            + x.data[x.indptr[i] : x.indptr[i + 1]].tobytes()
        )
        for i in range(n)
    }
    if len(row_keys) < k:
        raise TooFewPoints(f"{len(row_keys)} distinct vectors for k={k}")

    xc, cols = _compact(x)
    xc = sparse.csr_matrix(xc)
    rng = np.random.default_rng(seed)

    # k-means++ over 1 - cosine distances
    centers = np.zeros((k, xc.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = xc[first].toarray().ravel()
    best_sim = np.asarray((xc @ centers[0]).ravel())
    for c in range(1, k):
        d = np.maximum(0.0, 1.0 - best_sim)
        total = float(d.sum())
        if total <= 0:
            probs = np.full(n, 1.0 / n)
        else:
            probs = d / total
        pick = int(rng.choice(n, p=probs))
        centers[c] = xc[pick].toarray().ravel()
        best_sim = np.maximum(best_sim, np.asarray((xc @ centers[c]).ravel()))

    assign = np.full(n, -1, dtype=np.int64)
    inertia = math.inf
    iterations = 0
    for _ in range(max_iters):
        sims = np.asarray((xc @ centers.T))
        new_assign = np.argmax(sims, axis=1)  # first max wins: lowest id on tie
        new_inertia = float(np.sum(1.0 - sims[np.arange(n), new_assign]))
        assert new_inertia <= inertia + 1e-9, "inertia increased"
        iterations += 1
        if np.array_equal(new_assign, assign):
            assign, inertia = new_assign, new_inertia
            break
        assign, inertia = new_assign, new_inertia
        for c in range(k):
            members = np.nonzero(assign == c)[0]
            if len(members) == 0:
                continue  # empty cluster keeps its previous centroid
            mean = np.asarray(xc[members].mean(axis=0)).ravel()
            norm = float(np.sqrt(np.dot(mean, mean)))
            if norm > 0:
                centers[c] = mean / norm

    matrix = sparse.csr_matrix(centers)
    matrix = sparse.csr_matrix(
        (matrix.data, cols[matrix.indices], matrix.indptr), shape=(k, dim)
    )
    return Centroids(
        dimension=dim,
        matrix=matrix,
        seed=seed,
        iterations=iterations,
        inertia=inertia,
    )


def assign_cluster(vector: sparse.csr_matrix, centroids: Centroids) -> int:
    """Argmax-cosine cluster id; zero vectors land in cluster 0."""
    sims = assign_similarities(vector, centroids)
    return int(np.argmax(sims))


def assign_similarities(
    vector: sparse.csr_matrix, centroids: Centroids
) -> np.ndarray:
    v = _normalize_rows(sparse.csr_matrix(vector))
    return np.asarray((centroids.matrix @ v.T).todense()).ravel()


@dataclass
class ClusterLabel:
    cluster_id: int
    doc_count: int
    mean_quality: float | None  # None for empty clusters
    verdict: str  # keep | drop
    override: str | None = None  # manual override that produced the verdict


@dataclass
class ClusterLabelMap:
    threshold: float
    labels: dict[int, ClusterLabel] = field(default_factory=dict)

    def verdict_for(self, cluster_id: int) -> str:
        return self.labels[cluster_id].verdict

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "labels": [
                {
                    "cluster_id": l.cluster_id,
                    "doc_count": l.doc_count,
                    "mean_quality": l.mean_quality,
                    "verdict": l.verdict,
                    "override": l.override,
                }
                for l in sorted(self.labels.values(), key=lambda l: l.cluster_id)
            ],
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "ClusterLabelMap":
        out = cls(threshold=rec["threshold"])
        for l in rec["labels"]:
            out.labels[l["cluster_id"]] = ClusterLabel(
                cluster_id=l["cluster_id"],
                doc_count=l["doc_count"],
                mean_quality=l["mean_quality"],
                verdict=l["verdict"],
                override=l.get("override"),
            )
        return out


def parse_override_file(path: str | Path) -> dict[int, str]:
    """Lines of "cluster_id keep|drop", with "#" comments allowed."""
    overrides: dict[int, str] = {}
    for lineno, raw in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in (KEEP, DROP):
            raise ValueError(f"{path}:{lineno}: expected 'cluster_id keep|drop'")
        overrides[int(parts[0])] = parts[1]
    return overrides


def label_clusters(
    assignments: Sequence[int],
    quality_scores: Sequence[float | None],
    k: int,
    threshold: float = DEFAULT_CLUSTER_QUALITY_MIN,
    overrides: dict[int, str] | None = None,
) -> ClusterLabelMap:
    """Per-cluster keep/drop from mean quality; overrides win outright.

    Empty clusters keep (no evidence); a doc without a quality score is
    a hard error because the verdict would silently skew.
    """
    if len(assignments) != len(quality_scores):
        raise ValueError("assignments and scores must align")
    sums = np.zeros(k, dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i, (cid, score) in enumerate(zip(assignments, quality_scores)):
        if score is None:
            raise MissingScores(f"document at position {i} has no quality score")
        if not 0 <= cid < k:
            raise ValueError(f"cluster id {cid} out of range for k={k}")
        sums[cid] += score
        counts[cid] += 1
    overrides = overrides or {}
    out = ClusterLabelMap(threshold=threshold)
    for cid in range(k):
        if counts[cid] == 0:
            mean: float | None = None
            verdict = KEEP
        else:
            mean = float(sums[cid] / counts[cid])
            verdict = KEEP if mean >= threshold else DROP
        override = overrides.get(cid)
        if override is not None:
            verdict = override
        out.labels[cid] = ClusterLabel(
            cluster_id=cid,
            doc_count=int(counts[cid]),
            mean_quality=mean,
            verdict=verdict,
            override=override,
        )
    return out

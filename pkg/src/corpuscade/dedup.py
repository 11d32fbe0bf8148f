"""Cascaded deduplication: paragraph, MinHash, exact, and substring.

Four stages, in corpus order: (1) paragraphs repeated corpus-wide beyond
a cap are stripped from every document; (2) near-duplicate documents are
found with 128-permutation MinHash + 16x8 LSH, verified by exact shingle
Jaccard, and collapsed to the smallest id; (3) documents with identical
normalized text are collapsed to the smallest id; (4) 50-token runs
already seen elsewhere are excised from all but their first occurrence.

Retention is id-canonical everywhere, so any shard partitioning of the
same input set dedups to the same output set.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus_io import Document, dedup_normalize
from .errors import DuplicateDocId, EmptyShingles, ModelFormatError
from .hashing import stable_hash64
from .repstats import _word_arrays
from .segmentation import paragraph_spans, split_words, word_spans

SHINGLE_WORDS = 5
NUM_PERMUTATIONS = 128
LSH_BANDS = 16
LSH_ROWS = 8
VERIFY_JACCARD = 0.7
PARAGRAPH_MAX_OCCURRENCES = 100
SUBSTRING_WINDOW = 50

_FORMAT = "corpuscade-lsh-index"
_VERSION = 1

# polynomial combiner constants for rolling word-gram keys
_P1 = np.uint64(0x9E3779B97F4A7C15)

_SPLITMIX_C1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_C2 = np.uint64(0x94D049BB133111EB)


def _mix(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    v ^= v >> np.uint64(30)
    v *= _SPLITMIX_C1
    v ^= v >> np.uint64(27)
    v *= _SPLITMIX_C2
    v ^= v >> np.uint64(31)
    return v


def _gram_keys(word_hashes: np.ndarray, n: int) -> np.ndarray:
    """Rolling polynomial keys for every n-gram of a word-hash sequence."""
    m = len(word_hashes) - n + 1
    if m <= 0:
        return np.empty(0, dtype=np.uint64)
    acc = np.zeros(m, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(n):
            acc = acc * _P1 + word_hashes[j : j + m]
    return _mix(acc)


def shingle_set(text: str) -> np.ndarray:
    """Sorted unique 64-bit keys of the word 5-grams of normalized text."""
    hashes, _ = _word_arrays(dedup_normalize(text))
    return np.unique(_gram_keys(hashes, SHINGLE_WORDS))


def _permutation_constants(
    count: int = NUM_PERMUTATIONS, seed: int = 0x5EED
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 1 << 64, size=count, dtype=np.uint64) | np.uint64(1)
    b = rng.integers(0, 1 << 64, size=count, dtype=np.uint64)
    return a, b


_PERM_A, _PERM_B = _permutation_constants()

try:
    from numba import njit as _njit

    _U64_1 = np.uint64(0xFFFFFFFFFFFFFFFF)
    _S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)

    @_njit(cache=True)
    def _minhash_kernel(shingles, perm_a, perm_b):  # pragma: no cover - via minhash_signature
        out = np.empty(perm_a.shape[0], np.uint64)
        for j in range(perm_a.shape[0]):
            best = _U64_1
            a, b = perm_a[j], perm_b[j]
            for i in range(shingles.shape[0]):
                v = shingles[i] * a + b
                v ^= v >> _S30
                v *= _SPLITMIX_C1
                v ^= v >> _S27
                v *= _SPLITMIX_C2
                v ^= v >> _S31
                if v < best:
                    best = v
            out[j] = best
        return out

except ImportError:  # pragma: no cover - numba is an optional accelerator
    _minhash_kernel = None


def minhash_signature(shingles: np.ndarray) -> np.ndarray:
    """128 minima under fixed bijective permutations of the key space."""
    if len(shingles) == 0:
        raise EmptyShingles("no shingles: document shorter than 5 words")
    if _minhash_kernel is not None:
        return _minhash_kernel(shingles, _PERM_A, _PERM_B)
    with np.errstate(over="ignore"):
        table = shingles[:, None] * _PERM_A[None, :] + _PERM_B[None, :]
        table = _mix(table)
    return table.min(axis=0)


def exact_jaccard(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 and len(b) == 0:
        return 1.0
    inter = len(np.intersect1d(a, b, assume_unique=True))
    union = len(a) + len(b) - inter
    return inter / union if union else 1.0


def signature_agreement(sig_a: np.ndarray, sig_b: np.ndarray) -> float:
    return float(np.mean(sig_a == sig_b))


class LshIndex:
    """Banded signature index; equal band rows make candidate pairs."""

    def __init__(self, bands: int = LSH_BANDS, rows: int = LSH_ROWS):
        self.bands = bands
        self.rows = rows
        self.tables: list[dict[bytes, list[str]]] = [{} for _ in range(bands)]
        self.doc_ids: set[str] = set()

    def insert_and_candidates(self, doc_id: str, signature: np.ndarray) -> list[str]:
        """Ids sharing at least one full band, then insert; sorted unique."""
        if doc_id in self.doc_ids:
            raise DuplicateDocId(doc_id)
        if len(signature) != self.bands * self.rows:
            raise ValueError(
                f"signature length {len(signature)} != {self.bands}x{self.rows}"
            )
        sig = np.ascontiguousarray(signature, dtype=np.uint64)
        candidates: set[str] = set()
        for band in range(self.bands):
            key = sig[band * self.rows : (band + 1) * self.rows].tobytes()
            bucket = self.tables[band].get(key)
            if bucket is None:
                self.tables[band][key] = [doc_id]
            else:
                candidates.update(bucket)
                bucket.append(doc_id)
        self.doc_ids.add(doc_id)
        return sorted(candidates)

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _FORMAT,
            "version": _VERSION,
            "bands": self.bands,
            "rows": self.rows,
            "tables": [
                {key.hex(): ids for key, ids in table.items()}
                for table in self.tables
            ],
        }
        Path(path).write_text(json.dumps(rec), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LshIndex":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        index = cls(bands=rec["bands"], rows=rec["rows"])
        for band, table in enumerate(rec["tables"]):
            index.tables[band] = {
                bytes.fromhex(key): list(ids) for key, ids in table.items()
            }
        for table in index.tables:
            for ids in table.values():
                index.doc_ids.update(ids)
        return index


@dataclass(frozen=True)
class DupCluster:
    members: tuple[str, ...]  # sorted
    retained: str

    @classmethod
    def of(cls, members: Iterable[str]) -> "DupCluster":
        ordered = tuple(sorted(set(members)))
        return cls(members=ordered, retained=ordered[0])


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        root = x
        while self.parent.setdefault(root, root) != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # canonical root = smaller id, so the merge order cannot matter
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra


def resolve_clusters(
    pairs: Iterable[tuple[str, str]],
    shingles: Mapping[str, np.ndarray] | None = None,
    cutoff: float = VERIFY_JACCARD,
) -> list[DupCluster]:
    """Union-find over (optionally Jaccard-verified) candidate pairs.

    The partition is independent of pair order; each cluster retains its
    lexicographically smallest member.
    """
    uf = _UnionFind()
    for a, b in pairs:
        if a == b:
            continue
        if shingles is not None:
            if exact_jaccard(shingles[a], shingles[b]) < cutoff:
                continue
        uf.union(a, b)
    groups: dict[str, list[str]] = {}
    for member in uf.parent:
        groups.setdefault(uf.find(member), []).append(member)
    clusters = [DupCluster.of(g) for g in groups.values() if len(g) > 1]
    clusters.sort(key=lambda c: c.retained)
    return clusters


def lsh_candidate_pairs(
    docs: Iterable[tuple[str, np.ndarray]],
    index: LshIndex | None = None,
) -> tuple[list[tuple[str, str]], LshIndex]:
    """Feed (id, signature) pairs in sorted-id order; collect candidates."""
    index = index or LshIndex()
    pairs: list[tuple[str, str]] = []
    for doc_id, sig in sorted(docs, key=lambda d: d[0]):
        for other in index.insert_and_candidates(doc_id, sig):
            pairs.append((other, doc_id))
    return pairs, index


# ---------------------------------------------------------------------------
# paragraph dedup (two passes)


def paragraph_key(paragraph: str) -> int:
    return stable_hash64(dedup_normalize(paragraph))


def count_paragraphs(texts: Iterable[str]) -> Counter:
    counter: Counter = Counter()
    for text in texts:
        for a, b in paragraph_spans(text):
            counter[paragraph_key(text[a:b])] += 1
    return counter


def strip_repeated_paragraphs(
    doc: Document,
    counts: Mapping[int, int],
    max_occurrences: int = PARAGRAPH_MAX_OCCURRENCES,
) -> tuple[Document, int]:
    """Drop paragraphs seen more than max_occurrences corpus-wide.

    Returns the rewritten doc and the number of paragraphs removed; kept
    paragraphs are rejoined with blank lines.
    """
    spans = paragraph_spans(doc.text)
    kept: list[str] = []
    removed = 0
    for a, b in spans:
        para = doc.text[a:b]
        if counts.get(paragraph_key(para), 0) > max_occurrences:
            removed += 1
        else:
            kept.append(para)
    if removed == 0:
        return doc, 0
    from dataclasses import replace

    return replace(doc, text="\n\n".join(kept), meta=dict(doc.meta)), removed


# ---------------------------------------------------------------------------
# exact document dedup (two passes, id-canonical retention)


def exact_key(text: str) -> str:
    from .hashing import stable_digest

    return stable_digest(dedup_normalize(text)).hex()


def exact_retained_ids(docs: Iterable[tuple[str, str]]) -> set[str]:
    """From (id, text) pairs: ids retained by normalized-text uniqueness."""
    best: dict[str, str] = {}
    for doc_id, text in docs:
        key = exact_key(text)
        cur = best.get(key)
        if cur is None or doc_id < cur:
            best[key] = doc_id
    return set(best.values())


# ---------------------------------------------------------------------------
# substring dedup (three passes over the corpus)


@dataclass
class _DocWindows:
    words: list[str]  # normalized words
    spans: list[tuple[int, int]]  # raw char span per word
    keys: np.ndarray  # uint64 rolling key per window


def _doc_windows(text: str, window: int) -> _DocWindows:
    spans = word_spans(text)
    words = [_normalize_word(text[a:b]) for a, b in spans]
    hashes = np.empty(len(words), dtype=np.uint64)
    for i, w in enumerate(words):
        hashes[i] = stable_hash64(w)
    return _DocWindows(words=words, spans=spans, keys=_gram_keys(hashes, window))


def _normalize_word(word: str) -> str:
    import unicodedata

    return unicodedata.normalize("NFC", word).lower()


@dataclass
class SubstringIndex:
    """Corpus-wide window statistics for the rewrite pass."""

    window: int
    counts: Counter = field(default_factory=Counter)
    # for keys seen >1 time: canonical owner (doc_id, start) and its text
    owners: dict[int, tuple[str, int]] = field(default_factory=dict)
    owner_texts: dict[int, str] = field(default_factory=dict)


def build_substring_index(
    docs: Iterable[tuple[str, str]], window: int = SUBSTRING_WINDOW
) -> SubstringIndex:
    """Pass 1+2: count window keys, then record owners for repeated keys."""
    index = SubstringIndex(window=window)
    doc_list = list(docs)
    for _, text in doc_list:
        dw = _doc_windows(text, window)
        index.counts.update(dw.keys.tolist())
    for doc_id, text in doc_list:
        dw = _doc_windows(text, window)
        for start, key in enumerate(dw.keys.tolist()):
            if index.counts[key] <= 1:
                continue
            claim = (doc_id, start)
            cur = index.owners.get(key)
            if cur is None or claim < cur:
                index.owners[key] = claim
                index.owner_texts[key] = " ".join(
                    dw.words[start : start + window]
                )
    return index


def excise_repeated_windows(
    doc: Document, index: SubstringIndex
) -> tuple[Document, int]:
    """Pass 3: cut maximal repeated word runs not owned by this doc.

    Returns the rewritten doc and the count of characters excised. Word
    content is byte-compared against the owner's text before any cut, so
    rolling-key collisions cannot excise innocent text.
    """
    window = index.window
    dw = _doc_windows(doc.text, window)
    n = len(dw.words)
    cut = np.zeros(n, dtype=bool)
    for start, key in enumerate(dw.keys.tolist()):
        if index.counts[key] <= 1:
            continue
        owner = index.owners.get(key)
        if owner is None or owner == (doc.id, start):
            continue
        if index.owner_texts[key] != " ".join(dw.words[start : start + window]):
            continue  # hash collision, not a real repeat
        cut[start : start + window] = True
    if not cut.any():
        return doc, 0
    pieces: list[str] = []
    last = 0
    removed_chars = 0
    i = 0
    while i < n:
        if cut[i]:
            j = i
            while j < n and cut[j]:
                j += 1
            lo = dw.spans[i][0]
            hi = dw.spans[j - 1][1]
            pieces.append(doc.text[last:lo])
            removed_chars += hi - lo
            last = hi
            i = j
        else:
            i += 1
    pieces.append(doc.text[last:])
    from dataclasses import replace

    new_text = "".join(pieces)
    return replace(doc, text=new_text, meta=dict(doc.meta)), removed_chars


def doc_word_count(text: str) -> int:
    return len(split_words(text))

"""Topic labeling and per-topic down-sampling.

A multinomial naive-Bayes model over hashed word counts assigns one of
six labels; a sampling policy then keeps each document with a per-label
probability decided by a hash of (doc id, seed), so retention is
reproducible under any sharding or ordering.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .corpus_io import dedup_normalize
from .errors import MissingClass, ModelFormatError, UnlabeledDoc
from .hashing import decision_fraction, stable_hash64
from .segmentation import split_words

_FORMAT = "corpuscade-topic-model"
_VERSION = 1

LABELS = ("ads", "fiction", "forum", "knowledge", "news", "other")
FALLBACK_LABEL = "other"
TOPIC_DIMENSION = 1 << 18
DEFAULT_ADS_KEEP_PROB = 0.1


def _hashed_counts(text: str, dimension: int) -> dict[int, int]:
    counts: dict[int, int] = {}
    for word in split_words(dedup_normalize(text)):
        idx = int(stable_hash64(word) & (dimension - 1))
        counts[idx] = counts.get(idx, 0) + 1
    return counts


@dataclass
class TopicModel:
    labels: tuple[str, ...]
    dimension: int
    alpha: float
    class_docs: dict[str, int]  # documents per label (priors)
    class_counts: dict[str, dict[int, int]]  # label -> hashed index -> count
    class_totals: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.class_totals:
            self.class_totals = {
                label: sum(table.values())
                for label, table in self.class_counts.items()
            }

    def log_prior(self, label: str) -> float:
        total = sum(self.class_docs.values())
        return math.log(self.class_docs[label] / total)

    def log_likelihood(self, label: str, index: int) -> float:
        c = self.class_counts[label].get(index, 0)
        denom = self.class_totals[label] + self.alpha * self.dimension
        return math.log((c + self.alpha) / denom)

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _FORMAT,
            "version": _VERSION,
            "labels": list(self.labels),
            "dimension": self.dimension,
            "alpha": self.alpha,
            "class_docs": self.class_docs,
            "class_counts": {
                label: {str(i): c for i, c in table.items()}
                for label, table in self.class_counts.items()
            },
        }
        Path(path).write_text(json.dumps(rec), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TopicModel":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        return cls(
            labels=tuple(rec["labels"]),
            dimension=rec["dimension"],
            alpha=rec["alpha"],
            class_docs=dict(rec["class_docs"]),
            class_counts={
                label: {int(i): c for i, c in table.items()}
                for label, table in rec["class_counts"].items()
            },
        )


def train_topic(
    labeled: Iterable[tuple[str, str]],
    labels: tuple[str, ...] = LABELS,
    dimension: int = TOPIC_DIMENSION,
    alpha: float = 1.0,
) -> TopicModel:
    """Additive-smoothed multinomial NB from (label, text) pairs."""
    class_docs = {label: 0 for label in labels}
    class_counts: dict[str, dict[int, int]] = {label: {} for label in labels}
    for label, text in labeled:
        if label not in class_docs:
            raise ValueError(f"unknown label {label!r}; expected one of {labels}")
        class_docs[label] += 1
        table = class_counts[label]
        for idx, c in _hashed_counts(text, dimension).items():
            table[idx] = table.get(idx, 0) + c
    missing = [label for label, n in class_docs.items() if n == 0]
    if missing:
        raise MissingClass(f"labels with no training docs: {missing}")
    return TopicModel(
        labels=tuple(sorted(labels)),
        dimension=dimension,
        alpha=alpha,
        class_docs=class_docs,
        class_counts=class_counts,
    )


def classify_topic(text: str, model: TopicModel) -> tuple[str, dict[str, float]]:
    """(argmax label, posterior map); empty docs are "other" with a flat map."""
    counts = _hashed_counts(text, model.dimension)
    if not counts:
        uniform = {label: 1.0 / len(model.labels) for label in model.labels}
        return FALLBACK_LABEL, uniform
    log_post = {}
    for label in model.labels:
        score = model.log_prior(label)
        for idx, c in counts.items():
            score += c * model.log_likelihood(label, idx)
        log_post[label] = score
    peak = max(log_post.values())
    expd = {label: math.exp(s - peak) for label, s in log_post.items()}
    z = sum(expd.values())
    posterior = {label: v / z for label, v in expd.items()}
    # strict > keeps the lexicographically first label on exact ties
    ordered = sorted(model.labels)
    best = ordered[0]
    for label in ordered[1:]:
        if posterior[label] > posterior[best]:
            best = label
    return best, posterior


@dataclass(frozen=True)
class SamplingPolicy:
    keep_prob: Mapping[str, float]
    seed: int = 0

    def __post_init__(self) -> None:
        for label, p in self.keep_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"keep_prob[{label!r}]={p} outside [0,1]")

    def prob_for(self, label: str) -> float:
        return self.keep_prob.get(label, 1.0)


def default_policy(seed: int = 0) -> SamplingPolicy:
    return SamplingPolicy(keep_prob={"ads": DEFAULT_ADS_KEEP_PROB}, seed=seed)


def keep_document(doc_id: str, label: str | None, policy: SamplingPolicy) -> bool:
    """Deterministic Bernoulli: hash(id, seed)/2^64 < keep_prob(label)."""
    if label is None:
        raise UnlabeledDoc(doc_id)
    p = policy.prob_for(label)
    if p >= 1.0:
        return True
    return decision_fraction(doc_id, policy.seed) < p

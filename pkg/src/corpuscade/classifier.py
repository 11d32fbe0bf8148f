"""Logistic classifier over hashed features, trained by seeded SGD.

Shared by the quality and safety scorers. Training visits examples in
a canonical content-hash order before shuffling, so swapping the
positive and negative argument produces mirror-image weights and
complementary scores regardless of argument order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ModelFormatError, OneClassOnly
from .features import DEFAULT_DIMENSION, HashedFeatureVector, featurize
from .hashing import stable_hash64

_FORMAT = "corpuscade-linear-classifier"
_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = DEFAULT_DIMENSION
    epochs: int = 10
    learning_rate: float = 0.5
    l2: float = 1e-6
    seed: int = 0


@dataclass
class LinearClassifier:
    weights: np.ndarray  # float64, size dimension
    bias: float
    metadata: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])

    def score_vector(self, vec: HashedFeatureVector) -> float:
        if vec.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        z = self.bias + float(np.dot(self.weights[vec.indices], vec.weights))
        return _sigmoid(z)

    def score_text(self, text: str) -> float:
        return self.score_vector(featurize(text, self.dimension))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        meta = {
            "format": _FORMAT,
            "version": _VERSION,
            "bias": self.bias,
            "metadata": self.metadata,
        }
        # file-handle form so numpy cannot append a second .npz suffix
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh,
                weights=self.weights,
                meta=np.frombuffer(
                    json.dumps(meta).encode("utf-8"), dtype=np.uint8
                ),
            )

    @classmethod
    def load(cls, path: str | Path) -> "LinearClassifier":
        try:
            bundle = np.load(path)
        except Exception as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        with bundle:
            try:
                meta = json.loads(bytes(bundle["meta"]).decode("utf-8"))
                weights = bundle["weights"]
            except KeyError as exc:
                raise ModelFormatError(f"missing field in {path}: {exc}") from exc
        if meta.get("format") != _FORMAT or meta.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        return cls(
            weights=np.asarray(weights, dtype=np.float64),
            bias=float(meta["bias"]),
            metadata=meta.get("metadata", {}),
        )


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return float(e / (1.0 + e))


def _as_vectors(
    items: Sequence[str] | Sequence[HashedFeatureVector], dimension: int
) -> list[HashedFeatureVector]:
    out: list[HashedFeatureVector] = []
    for item in items:
        if isinstance(item, HashedFeatureVector):
            if item.dimension != dimension:
                raise ValueError("feature vector dimension mismatch")
            out.append(item)
        else:
            out.append(featurize(item, dimension))
    return out


def _content_key(vec: HashedFeatureVector) -> int:
    return stable_hash64(vec.indices.tobytes() + vec.weights.tobytes())


def train_classifier(
    positives: Sequence[str] | Sequence[HashedFeatureVector],
    negatives: Sequence[str] | Sequence[HashedFeatureVector],
    config: TrainConfig = TrainConfig(),
    positive_tag: str = "positive",
    negative_tag: str = "negative",
) -> LinearClassifier:
    """Fit logistic regression with SGD; reproducible for a fixed seed.

    Zero-init weights plus canonical example ordering make label-flipped
    training (swapped arguments) yield scores that complement to 1.
    """
    if not positives or not negatives:
        raise OneClassOnly("need at least one example of each class")
    pos = _as_vectors(positives, config.dimension)
    neg = _as_vectors(negatives, config.dimension)
    examples = [(v, 1.0) for v in pos] + [(v, 0.0) for v in neg]
    examples.sort(key=lambda e: _content_key(e[0]))

    rng = np.random.default_rng(config.seed)
    w = np.zeros(config.dimension, dtype=np.float64)
    b = 0.0
    lr, l2 = config.learning_rate, config.l2
    for _ in range(config.epochs):
        for i in rng.permutation(len(examples)):
            vec, y = examples[i]
            z = b + float(np.dot(w[vec.indices], vec.weights))
            g = y - _sigmoid(z)
            if l2:
                w[vec.indices] *= 1.0 - lr * l2
            w[vec.indices] += lr * g * vec.weights
            b += lr * g
    return LinearClassifier(
        weights=w,
        bias=b,
        metadata={
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "l2": config.l2,
            "seed": config.seed,
            "positive_tag": positive_tag,
            "negative_tag": negative_tag,
            "n_positive": len(pos),
            "n_negative": len(neg),
        },
    )

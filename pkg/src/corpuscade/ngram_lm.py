"""Word n-gram language model with modified Kneser-Ney smoothing.

Raw counts at the highest order, continuation counts below, and three
count-dependent discounts per order estimated from count-of-count
statistics. The recursion bottoms out in a uniform 1/V distribution so
every conditional sums to one exactly, including over unseen contexts.

Boundary convention: order >= 2 pads each sequence with n-1 start
markers and predicts every token plus one end-of-sequence event; order
1 scores bare tokens with no boundary events at all.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus, ModelFormatError
from .segmentation import split_words

_FORMAT = "corpuscade-ngram-lm"
_VERSION = 1

UNK = "<unk>"
EOS = "</s>"
_BOS_ID = -1  # context-only marker, never predicted, never in vocab

Gram = tuple[int, ...]


def _discounts(values: Iterable[int]) -> tuple[float, float, float]:
    """Chen-Goodman modified discounts (D1, D2, D3+) from count frequencies.

    Undefined ratios fall back to 0 (their discount is then never applied
    to any observed count), and each Dk is clamped into [0, k] so the
    discounted mass can never go negative.
    """
    n1 = n2 = n3 = n4 = 0
    for v in values:
        if v == 1:
            n1 += 1
        elif v == 2:
            n2 += 1
        elif v == 3:
            n3 += 1
        elif v == 4:
            n4 += 1
    y = n1 / (n1 + 2 * n2) if n1 + 2 * n2 > 0 else 0.0
    d1 = 1.0 - 2.0 * y * (n2 / n1) if n1 > 0 else 0.0
    d2 = 2.0 - 3.0 * y * (n3 / n2) if n2 > 0 else 0.0
    d3 = 3.0 - 4.0 * y * (n4 / n3) if n3 > 0 else 0.0
    return (
        min(max(d1, 0.0), 1.0),
        min(max(d2, 0.0), 2.0),
        min(max(d3, 0.0), 3.0),
    )


@dataclass
class NgramLM:
    order: int
    vocab: dict[str, int]  # predicted tokens: words, <unk>, and </s> for order >= 2
    # index m-1 holds the order-m tables
    counts: list[dict[Gram, int]]
    totals: list[dict[Gram, int]]  # context -> sum of counts over next token
    type_counts: list[dict[Gram, tuple[int, int, int]]]  # context -> (N1, N2, N3+)
    discounts: list[tuple[float, float, float]]
    _id_to_token: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self._id_to_token:
            self._id_to_token = {i: t for t, i in self.vocab.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_id(self, token: str) -> int:
        return self.vocab.get(token, self.vocab[UNK])

    def _discount_for(self, m: int, c: int) -> float:
        if c == 0:
            return 0.0
        d1, d2, d3 = self.discounts[m - 1]
        return d1 if c == 1 else d2 if c == 2 else d3

    def _prob_ids(self, m: int, ctx: Gram, w: int) -> float:
        if m == 0:
            return 1.0 / self.vocab_size
        total = self.totals[m - 1].get(ctx, 0)
        if total == 0:
            # unseen context: nothing observed to interpolate, back off fully
            return self._prob_ids(m - 1, ctx[1:], w)
        c = self.counts[m - 1].get(ctx + (w,), 0)
        n1, n2, n3p = self.type_counts[m - 1][ctx]
        d1, d2, d3 = self.discounts[m - 1]
        gamma = (d1 * n1 + d2 * n2 + d3 * n3p) / total
        base = max(c - self._discount_for(m, c), 0.0) / total
        return base + gamma * self._prob_ids(m - 1, ctx[1:], w)

    def conditional_prob(self, context: Sequence[str], token: str) -> float:
        """p(token | context); context is padded/truncated to order-1 tokens.

        "<s>" in the context names the start marker; the token itself must
        be a vocab word, <unk>, or </s>.
        """
        ctx_ids = tuple(
            _BOS_ID if t == "<s>" else self.token_id(t) for t in context
        )
        pad = (_BOS_ID,) * max(0, self.order - 1 - len(ctx_ids))
        ctx_ids = (pad + ctx_ids)[-(self.order - 1) :] if self.order > 1 else ()
        return self._prob_ids(self.order, ctx_ids, self.token_id(token))

    def sequence_nll(self, tokens: Sequence[str]) -> tuple[float, int]:
        """(total negative log-likelihood, number of scored events)."""
        ids = [self.token_id(t) for t in tokens]
        if self.order == 1:
            events = ids
            ctx: list[int] = []
        else:
            events = ids + [self.vocab[EOS]]
            ctx = [_BOS_ID] * (self.order - 1)
        nll = 0.0
        for w in events:
            p = self._prob_ids(self.order, tuple(ctx), w)
            nll -= math.log(p)
            if self.order > 1:
                ctx = ctx[1:] + [w]
        return nll, len(events)

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _FORMAT,
            "version": _VERSION,
            "order": self.order,
            "vocab": self.vocab,
            "counts": [
                {" ".join(map(str, g)): c for g, c in table.items()}
                for table in self.counts
            ],
        }
        Path(path).write_text(json.dumps(rec, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NgramLM":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        counts = [
            {
                tuple(int(x) for x in key.split()): c
                for key, c in table.items()
            }
            for table in rec["counts"]
        ]
        return _assemble(rec["order"], dict(rec["vocab"]), counts)


def _context_tables(
    counts: dict[Gram, int],
) -> tuple[dict[Gram, int], dict[Gram, tuple[int, int, int]]]:
    totals: dict[Gram, int] = {}
    types: dict[Gram, list[int]] = {}
    for gram, c in counts.items():
        ctx = gram[:-1]
        totals[ctx] = totals.get(ctx, 0) + c
        t = types.setdefault(ctx, [0, 0, 0])
        if c == 1:
            t[0] += 1
        elif c == 2:
            t[1] += 1
        else:
            t[2] += 1
    return totals, {ctx: (t[0], t[1], t[2]) for ctx, t in types.items()}


def _assemble(order: int, vocab: dict[str, int], counts: list[dict[Gram, int]]) -> NgramLM:
    totals: list[dict[Gram, int]] = []
    type_counts: list[dict[Gram, tuple[int, int, int]]] = []
    discounts: list[tuple[float, float, float]] = []
    for table in counts:
        tot, typ = _context_tables(table)
        totals.append(tot)
        type_counts.append(typ)
        discounts.append(_discounts(table.values()))
    return NgramLM(
        order=order,
        vocab=vocab,
        counts=counts,
        totals=totals,
        type_counts=type_counts,
        discounts=discounts,
    )


def train_ngram_lm(
    texts: Iterable[str], order: int = 5, min_count: int = 2
) -> NgramLM:
    """Fit a modified Kneser-Ney LM on whitespace/CJK-segmented words."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    sequences = [split_words(t) for t in texts]
    sequences = [s for s in sequences if s]
    if not sequences:
        raise EmptyCorpus("no tokens to train on")

    word_counts: dict[str, int] = {}
    for seq in sequences:
        for w in seq:
            word_counts[w] = word_counts.get(w, 0) + 1
    kept = sorted(w for w, c in word_counts.items() if c >= min_count)
    vocab: dict[str, int] = {w: i for i, w in enumerate(kept)}
    vocab[UNK] = len(vocab)
    if order >= 2:
        vocab[EOS] = len(vocab)

    unk_id = vocab[UNK]
    id_seqs = [[vocab.get(w, unk_id) for w in seq] for seq in sequences]

    top: dict[Gram, int] = {}
    if order == 1:
        for seq in id_seqs:
            for w in seq:
                g = (w,)
                top[g] = top.get(g, 0) + 1
    else:
        eos_id = vocab[EOS]
        for seq in id_seqs:
            padded = [_BOS_ID] * (order - 1) + seq + [eos_id]
            for i in range(len(padded) - order + 1):
                g = tuple(padded[i : i + order])
                top[g] = top.get(g, 0) + 1

    counts: list[dict[Gram, int]] = [{} for _ in range(order)]
    counts[order - 1] = top
    # continuation counts: number of distinct one-token-longer extensions
    for m in range(order - 1, 0, -1):
        seen: set[Gram] = set(counts[m])
        lower: dict[Gram, int] = {}
        for gram in seen:
            suffix = gram[1:]
            lower[suffix] = lower.get(suffix, 0) + 1
        counts[m - 1] = lower

    return _assemble(order, vocab, counts)


def lm_perplexity(text: str, lm: NgramLM) -> float:
    """exp(mean NLL) over the scored events; empty text is +infinity."""
    tokens = split_words(text)
    if not tokens:
        return math.inf
    nll, n = lm.sequence_nll(tokens)
    return math.exp(nll / n)


GLOBAL_LANG = "*"

_BUCKETS_FORMAT = "corpuscade-ppl-buckets"


@dataclass
class PerplexityBuckets:
    """Per-language tertile boundaries; language "*" is the global fallback."""

    boundaries: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        for lang, (b1, b2) in self.boundaries.items():
            if b1 > b2:
                raise ValueError(f"b1 > b2 for language {lang!r}")

    def bucket(self, ppl: float, lang: str = GLOBAL_LANG) -> str:
        bounds = self.boundaries.get(lang) or self.boundaries.get(GLOBAL_LANG)
        if bounds is None:
            raise KeyError(f"no calibration for language {lang!r}")
        b1, b2 = bounds
        if ppl <= b1:
            return "head"
        if ppl <= b2:
            return "middle"
        return "tail"

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _BUCKETS_FORMAT,
            "version": _VERSION,
            "boundaries": {k: list(v) for k, v in self.boundaries.items()},
        }
        Path(path).write_text(json.dumps(rec), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PerplexityBuckets":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _BUCKETS_FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_BUCKETS_FORMAT} v{_VERSION} file: {path}")
        return cls({k: (v[0], v[1]) for k, v in rec["boundaries"].items()})


def fit_buckets(
    scores: dict[str, Sequence[float]] | Sequence[float],
) -> PerplexityBuckets:
    """Tertile boundaries from calibration perplexities.

    A bare sequence calibrates the global "*" language. Finite scores
    only; b1/b2 sit at the ceil(k/3) and ceil(2k/3) order statistics so
    scores {1..9} give (3, 6).
    """
    from .errors import InsufficientCalibration

    if not isinstance(scores, dict):
        scores = {GLOBAL_LANG: scores}
    boundaries: dict[str, tuple[float, float]] = {}
    for lang, vals in scores.items():
        finite = sorted(v for v in vals if math.isfinite(v))
        k = len(finite)
        if k < 3:
            raise InsufficientCalibration(
                f"language {lang!r} has {k} finite calibration scores, need >= 3"
            )
        b1 = finite[math.ceil(k / 3) - 1]
        b2 = finite[math.ceil(2 * k / 3) - 1]
        boundaries[lang] = (b1, b2)
    return PerplexityBuckets(boundaries)

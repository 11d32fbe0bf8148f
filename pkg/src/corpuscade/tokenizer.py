"""Byte-level BPE tokenizer with digit splitting and byte fallback.

Conventions: identity normalization (no width folding), no dummy prefix
(whitespace attaches to the following piece but is never invented),
every decimal digit is its own piece so no learned token ever spans two
digits, and all 256 byte values stay in the vocabulary so encoding is
total and decode(encode(x)) == x for any UTF-8 string.
"""
from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus, ModelFormatError, UnknownId, VocabTooSmall

_FORMAT = "corpuscade-bpe"
_VERSION = 1

UNK_ID = 0
BOS_ID = 1
EOS_ID = 2
PAD_ID = 3
SPECIAL_TOKENS = {"<unk>": UNK_ID, "<s>": BOS_ID, "</s>": EOS_ID, "<pad>": PAD_ID}
BYTE_ID_BASE = 4
N_RESERVED = BYTE_ID_BASE + 256  # specials + every byte value

DEFAULT_VOCAB_SIZE = 64_000

_DIGIT = re.compile(r"\d")
_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class TokenizerConfig:
    vocab_size: int = DEFAULT_VOCAB_SIZE
    split_digits: bool = True
    byte_fallback: bool = True
    dummy_prefix: bool = False

    def __post_init__(self) -> None:
        if self.byte_fallback and self.vocab_size < N_RESERVED:
            raise VocabTooSmall(
                f"vocab_size {self.vocab_size} < {N_RESERVED} "
                "(256 byte tokens + 4 specials)"
            )


def pretokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split into pieces; concatenating the pieces reproduces the text.

    A whitespace run prefixes the next piece unless that piece is a digit
    (digits always stand alone); a trailing run is its own piece.
    """
    if config.dummy_prefix and text and not text[0].isspace():
        text = " " + text
    pieces: list[str] = []
    pos = 0
    pending_ws = ""
    for m in _WS_RUN.finditer(text):
        _emit_chunk(text[pos : m.start()], pending_ws, pieces, config)
        pending_ws = m.group()
        pos = m.end()
    _emit_chunk(text[pos:], pending_ws, pieces, config)
    return pieces


def _emit_chunk(
    chunk: str, ws: str, pieces: list[str], config: TokenizerConfig
) -> None:
    """Emit one whitespace-delimited chunk, ws attached where allowed."""
    if not chunk:
        if ws:
            pieces.append(ws)
        return
    if not config.split_digits:
        pieces.append(ws + chunk)
        return
    subpieces: list[str] = []
    start = 0
    for m in _DIGIT.finditer(chunk):
        if m.start() > start:
            subpieces.append(chunk[start : m.start()])
        subpieces.append(m.group())
        start = m.end()
    if start < len(chunk):
        subpieces.append(chunk[start:])
    if ws:
        if _DIGIT.fullmatch(subpieces[0]):
            pieces.append(ws)  # whitespace never prefixes a digit piece
        else:
            subpieces[0] = ws + subpieces[0]
    pieces.extend(subpieces)


@dataclass
class Tokenizer:
    config: TokenizerConfig
    vocab: dict[bytes, int]  # token byte string -> id (includes byte tokens)
    merges: list[tuple[int, int, int]]  # (left id, right id, merged id)
    _ranks: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    _id_to_bytes: dict[int, bytes] = field(default_factory=dict)
    _piece_cache: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self._ranks:
            for rank, (l, r, out) in enumerate(self.merges):
                # first rank wins if a pair ever recurs in the merge list
                self._ranks.setdefault((l, r), (rank, out))
        if not self._id_to_bytes:
            self._id_to_bytes = {i: b for b, i in self.vocab.items()}

    @property
    def vocab_size(self) -> int:
        return len(SPECIAL_TOKENS) + len(self.vocab)

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for piece in pretokenize(text, self.config):
            cached = self._piece_cache.get(piece)
            if cached is None:
                cached = self._encode_piece(piece)
                if len(self._piece_cache) < 1 << 20:
                    self._piece_cache[piece] = cached
            out.extend(cached)
        if not self.config.byte_fallback:
            out = [
                UNK_ID if BYTE_ID_BASE <= i < BYTE_ID_BASE + 256 else i
                for i in out
            ]
        return out

    def _encode_piece(self, piece: str) -> list[int]:
        ids = [BYTE_ID_BASE + b for b in piece.encode("utf-8")]
        while len(ids) > 1:
            best_rank = None
            for i in range(len(ids) - 1):
                hit = self._ranks.get((ids[i], ids[i + 1]))
                if hit is not None and (best_rank is None or hit[0] < best_rank):
                    best_rank = hit[0]
                    best_pair = (ids[i], ids[i + 1])
            if best_rank is None:
                break
            left, right = best_pair
            merged = self._ranks[(left, right)][1]
            new_ids: list[int] = []
            i = 0
            while i < len(ids):
                if i < len(ids) - 1 and ids[i] == left and ids[i + 1] == right:
                    new_ids.append(merged)
                    i += 2
                else:
                    new_ids.append(ids[i])
                    i += 1
            ids = new_ids
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        buf = bytearray()
        for i in ids:
            if i in (UNK_ID, BOS_ID, EOS_ID, PAD_ID):
                continue  # control tokens carry no text
            token = self._id_to_bytes.get(i)
            if token is None:
                raise UnknownId(f"id {i} not in vocabulary")
            buf.extend(token)
        return buf.decode("utf-8", errors="replace")

    def token_bytes(self, token_id: int) -> bytes:
        token = self._id_to_bytes.get(token_id)
        if token is None:
            raise UnknownId(f"id {token_id} not in vocabulary")
        return token

    def save(self, path: str | Path) -> None:
        rec = {
            "format": _FORMAT,
            "version": _VERSION,
            "config": {
                "vocab_size": self.config.vocab_size,
                "split_digits": self.config.split_digits,
                "byte_fallback": self.config.byte_fallback,
                "dummy_prefix": self.config.dummy_prefix,
            },
            "specials": SPECIAL_TOKENS,
            "vocab": {b.hex(): i for b, i in self.vocab.items()},
            "merges": self.merges,
        }
        Path(path).write_text(json.dumps(rec), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if rec.get("format") != _FORMAT or rec.get("version") != _VERSION:
            raise ModelFormatError(f"not a {_FORMAT} v{_VERSION} file: {path}")
        return cls(
            config=TokenizerConfig(**rec["config"]),
            vocab={bytes.fromhex(k): v for k, v in rec["vocab"].items()},
            merges=[tuple(m) for m in rec["merges"]],
        )


class _PairTracker:
    """Pair counts with a lazy max-heap keyed by (count, pair bytes)."""

    def __init__(self, id_bytes: dict[int, bytes]):
        self.counts: dict[tuple[int, int], int] = {}
        self.where: dict[tuple[int, int], set[int]] = {}
        self.heap: list[tuple[int, bytes, bytes, tuple[int, int]]] = []
        self.id_bytes = id_bytes

    def add(self, pair: tuple[int, int], freq: int, word_idx: int) -> None:
        new = self.counts.get(pair, 0) + freq
        self.counts[pair] = new
        self.where.setdefault(pair, set()).add(word_idx)
        heapq.heappush(
            self.heap,
            (-new, self.id_bytes[pair[0]], self.id_bytes[pair[1]], pair),
        )

    def remove(self, pair: tuple[int, int], freq: int) -> None:
        self.counts[pair] -= freq

    def pop_best(self) -> tuple[int, int] | None:
        """Highest count, ties to smallest (left, right) bytes; None if < 2."""
        while self.heap:
            neg, _, _, pair = self.heap[0]
            current = self.counts.get(pair, 0)
            if current != -neg:
                heapq.heappop(self.heap)
                if current >= 2:
                    heapq.heappush(
                        self.heap,
                        (
                            -current,
                            self.id_bytes[pair[0]],
                            self.id_bytes[pair[1]],
                            pair,
                        ),
                    )
                continue
            if current < 2:
                return None
            return pair
        return None


def train_bpe(
    corpus: Iterable[str], config: TokenizerConfig = TokenizerConfig()
) -> Tokenizer:
    """Greedy BPE: merge the most frequent in-piece pair until vocab_size.

    Ties break to the lexicographically smallest (left bytes, right bytes)
    pair; training stops early once no pair occurs at least twice, since
    a merge seen once could never apply at encode time on fresh text.
    """
    piece_freq: dict[str, int] = {}
    n_texts = 0
    for text in corpus:
        n_texts += 1
        for piece in pretokenize(text, config):
            piece_freq[piece] = piece_freq.get(piece, 0) + 1
    if n_texts == 0 or not piece_freq:
        raise EmptyCorpus("no text to train on")

    vocab: dict[bytes, int] = {bytes([v]): BYTE_ID_BASE + v for v in range(256)}
    id_bytes: dict[int, bytes] = {i: b for b, i in vocab.items()}
    next_id = N_RESERVED
    merges: list[tuple[int, int, int]] = []

    words: list[list[int]] = []
    freqs: list[int] = []
    for piece, freq in sorted(piece_freq.items()):
        words.append([BYTE_ID_BASE + b for b in piece.encode("utf-8")])
        freqs.append(freq)

    tracker = _PairTracker(id_bytes)
    for w_idx, ids in enumerate(words):
        for i in range(len(ids) - 1):
            tracker.add((ids[i], ids[i + 1]), freqs[w_idx], w_idx)

    target_merged = config.vocab_size - len(SPECIAL_TOKENS)
    while len(vocab) < target_merged:
        best = tracker.pop_best()
        if best is None:
            break
        left, right = best
        merged_bytes = id_bytes[left] + id_bytes[right]
        merged_id = vocab.get(merged_bytes)
        if merged_id is None:
            merged_id = next_id
            next_id += 1
            vocab[merged_bytes] = merged_id
            id_bytes[merged_id] = merged_bytes
        merges.append((left, right, merged_id))

        for w_idx in sorted(tracker.where.get(best, ())):
            ids = words[w_idx]
            freq = freqs[w_idx]
            if len(ids) < 2:
                continue
            has_pair = any(
                ids[i] == left and ids[i + 1] == right
                for i in range(len(ids) - 1)
            )
            if not has_pair:
                continue  # stale index entry from an earlier rewrite
            for i in range(len(ids) - 1):
                tracker.remove((ids[i], ids[i + 1]), freq)
            w = 0
            i = 0
            while i < len(ids):
                if i < len(ids) - 1 and ids[i] == left and ids[i + 1] == right:
                    ids[w] = merged_id
                    i += 2
                else:
                    ids[w] = ids[i]
                    i += 1
                w += 1
            del ids[w:]
            for i in range(len(ids) - 1):
                tracker.add((ids[i], ids[i + 1]), freq, w_idx)
        assert tracker.counts.get(best, 0) == 0, "pair accounting drift"

    return Tokenizer(config=config, vocab=vocab, merges=merges)

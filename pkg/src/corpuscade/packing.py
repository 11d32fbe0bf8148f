"""Length upsampling, fixed-length sequence packing, and token files.

Long documents can be emitted multiple times (hash-decided fractional
copies, so resharding cannot change the outcome), documents are packed
greedily into fixed windows with a separator after every span, and the
token streams are persisted in two little-endian uint32 containers:
"CCTK" for per-document ids and "CCPK" for packed sequences.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ModelFormatError
from .hashing import decision_fraction
from .tokenizer import EOS_ID, PAD_ID

_TOKEN_MAGIC = b"CCTK"
_PACKED_MAGIC = b"CCPK"
_FILE_VERSION = 1

DEFAULT_BUCKET_BOUNDS = (4_096, 32_768)
DEFAULT_BUCKET_WEIGHTS = (1.0, 1.0, 3.0)


@dataclass(frozen=True)
class UpsampleWeights:
    """Bucket i covers [bounds[i-1], bounds[i]); the last is unbounded."""

    bounds: tuple[int, ...] = DEFAULT_BUCKET_BOUNDS
    weights: tuple[float, ...] = DEFAULT_BUCKET_WEIGHTS
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.bounds) + 1:
            raise ValueError("need one more weight than bucket boundaries")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if list(self.bounds) != sorted(self.bounds):
            raise ValueError("bounds must be ascending")

    def bucket(self, token_count: int) -> int:
        for i, bound in enumerate(self.bounds):
            if token_count < bound:
                return i
        return len(self.bounds)

    def weight(self, token_count: int) -> float:
        return self.weights[self.bucket(token_count)]


def upsample_copies(doc_id: str, token_count: int, weights: UpsampleWeights) -> int:
    """floor(w) copies plus one more with probability frac(w), by hash."""
    w = weights.weight(token_count)
    whole = int(w)
    frac = w - whole
    if frac > 0 and decision_fraction(f"{doc_id}:upsample", weights.seed) < frac:
        whole += 1
    return whole


def length_upsample(
    docs: Iterable[tuple[str, Sequence[int]]], weights: UpsampleWeights
) -> Iterator[tuple[str, Sequence[int]]]:
    """Repeat each (doc_id, token ids) entry per its length-bucket weight."""
    for doc_id, ids in docs:
        for _ in range(upsample_copies(doc_id, len(ids), weights)):
            yield doc_id, ids


@dataclass
class PackedSequence:
    tokens: list[int]  # exactly seq_len entries
    spans: list[tuple[str, int, int]]  # (doc_id, start offset, length)
    separator_positions: list[int]
    padded: bool

    @property
    def content_tokens(self) -> int:
        return sum(length for _, _, length in self.spans)


def pack_sequences(
    docs: Iterable[tuple[str, Sequence[int]]],
    seq_len: int,
    separator_id: int = EOS_ID,
    pad_id: int = PAD_ID,
) -> Iterator[PackedSequence]:
    """Greedy packing: each span is followed by one separator token.

    A document longer than the window is split across sequences; the
    final partial window is padded and flagged. Sum of span lengths over
    all sequences equals the total input token count.
    """
    if seq_len < 2:
        raise ValueError(f"seq_len must be >= 2, got {seq_len}")
    tokens: list[int] = []
    spans: list[tuple[str, int, int]] = []
    seps: list[int] = []

    def flush(padded: bool) -> PackedSequence:
        nonlocal tokens, spans, seps
        if padded:
            tokens.extend([pad_id] * (seq_len - len(tokens)))
        out = PackedSequence(
            tokens=tokens, spans=spans, separator_positions=seps, padded=padded
        )
        tokens, spans, seps = [], [], []
        return out

    for doc_id, ids in docs:
        offset = 0
        remaining = len(ids)
        while remaining > 0:
            room = seq_len - len(tokens) - 1  # keep a slot for the separator
            if room <= 0:
                # one dead slot: no span + separator fits, pad it out
                yield flush(padded=len(tokens) < seq_len)
                room = seq_len - 1
            take = min(remaining, room)
            tokens.extend(ids[offset : offset + take])
            spans.append((doc_id, offset, take))
            seps.append(len(tokens))
            tokens.append(separator_id)
            offset += take
            remaining -= take
            if len(tokens) == seq_len:
                yield flush(padded=False)
    if tokens:
        yield flush(padded=True)


# ---------------------------------------------------------------------------
# binary token files


def _write_header(fh, magic: bytes, seq_len: int = 0) -> None:
    fh.write(magic)
    fh.write(struct.pack("<II", _FILE_VERSION, seq_len))


def _read_header(fh, magic: bytes, path) -> int:
    head = fh.read(12)
    if len(head) != 12 or head[:4] != magic:
        raise ModelFormatError(f"not a {magic.decode()} file: {path}")
    version, seq_len = struct.unpack("<II", head[4:])
    if version != _FILE_VERSION:
        raise ModelFormatError(f"unsupported {magic.decode()} version {version}")
    return seq_len


def write_token_corpus(
    path: str | Path,
    docs: Iterable[tuple[str, Sequence[int]]],
    separator_id: int = EOS_ID,
) -> int:
    """uint32 stream: each doc's ids then one separator; sidecar JSONL.

    The sidecar (path + ".docs.jsonl") records one {"id", "offset",
    "length"} row per document, offsets in tokens from the stream start.
    Returns the number of documents written.
    """
    path = Path(path)
    count = 0
    offset = 0
    with open(path, "wb") as fh, open(
        f"{path}.docs.jsonl", "w", encoding="utf-8"
    ) as side:
        _write_header(fh, _TOKEN_MAGIC)
        for doc_id, ids in docs:
            arr = np.asarray(ids, dtype=np.uint32)
            fh.write(arr.tobytes())
            fh.write(struct.pack("<I", separator_id))
            side.write(
                json.dumps(
                    {"id": doc_id, "offset": offset, "length": len(arr)},
                    sort_keys=True,
                )
                + "\n"
            )
            offset += len(arr) + 1
            count += 1
    return count


def read_token_corpus(path: str | Path) -> list[tuple[str, np.ndarray]]:
    """Inverse of write_token_corpus: [(doc_id, ids array)], separators dropped."""
    path = Path(path)
    with open(path, "rb") as fh:
        _read_header(fh, _TOKEN_MAGIC, path)
        stream = np.frombuffer(fh.read(), dtype=np.uint32)
    docs: list[tuple[str, np.ndarray]] = []
    with open(f"{path}.docs.jsonl", encoding="utf-8") as side:
        for line in side:
            rec = json.loads(line)
            lo = rec["offset"]
            docs.append((rec["id"], stream[lo : lo + rec["length"]].copy()))
    return docs


def write_packed_corpus(
    path: str | Path, sequences: Iterable[PackedSequence], seq_len: int
) -> int:
    """Fixed-length uint32 records plus a JSONL span sidecar."""
    path = Path(path)
    count = 0
    with open(path, "wb") as fh, open(
        f"{path}.spans.jsonl", "w", encoding="utf-8"
    ) as side:
        _write_header(fh, _PACKED_MAGIC, seq_len)
        for seq in sequences:
            if len(seq.tokens) != seq_len:
                raise ValueError(
                    f"sequence of {len(seq.tokens)} tokens in a {seq_len} file"
                )
            fh.write(np.asarray(seq.tokens, dtype=np.uint32).tobytes())
            side.write(
                json.dumps(
                    {
                        "spans": [list(s) for s in seq.spans],
                        "separators": seq.separator_positions,
                        "padded": seq.padded,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            count += 1
    return count


def read_packed_corpus(path: str | Path) -> tuple[int, list[PackedSequence]]:
    path = Path(path)
    with open(path, "rb") as fh:
        seq_len = _read_header(fh, _PACKED_MAGIC, path)
        stream = np.frombuffer(fh.read(), dtype=np.uint32)
    if seq_len == 0 or len(stream) % seq_len:
        raise ModelFormatError(f"corrupt packed file: {path}")
    sequences: list[PackedSequence] = []
    with open(f"{path}.spans.jsonl", encoding="utf-8") as side:
        for row, line in enumerate(side):
            rec = json.loads(line)
            tokens = stream[row * seq_len : (row + 1) * seq_len]
            sequences.append(
                PackedSequence(
                    tokens=[int(t) for t in tokens],
                    spans=[tuple(s) for s in rec["spans"]],
                    separator_positions=list(rec["separators"]),
                    padded=rec["padded"],
                )
            )
    if len(sequences) * seq_len != len(stream):
        raise ModelFormatError(f"span sidecar out of sync: {path}")
    return seq_len, sequences

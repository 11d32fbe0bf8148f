"""Needle-in-a-haystack retrieval test generation.

Each instance is a fixed-length token window of filler text with one
needle sentence planted at a controlled depth. A (lengths x depths)
grid plus its evaluation manifest exercises retrieval across context
positions; everything is a pure function of (corpus, spec, seed).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorpusTooSmall
from .hashing import stable_hash64
from .packing import write_token_corpus
from .tokenizer import Tokenizer

DESK_LENGTHS = tuple(range(4_096, 16_385, 1_365))[:10]  # 10 steps, 4K..16K
DESK_DEPTHS = tuple(round(i / 9, 4) for i in range(10))


@dataclass(frozen=True)
class NeedleSpec:
    needle: str
    question: str
    answer: str
    length: int  # total instance length in tokens
    depth: float  # 0 = start, 1 = end

    def __post_init__(self) -> None:
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError(f"depth {self.depth} outside [0,1]")
        if self.length < 2:
            raise ValueError(f"length {self.length} too small")


@dataclass
class HaystackInstance:
    instance_id: str
    tokens: list[int]
    needle_start: int  # token offset of the needle
    needle_len: int
    question: str
    answer: str
    length: int
    depth: float

    def manifest_row(self) -> dict:
        return {
            "id": self.instance_id,
            "length": self.length,
            "depth": self.depth,
            "needle_start": self.needle_start,
            "needle_len": self.needle_len,
            "question": self.question,
            "answer": self.answer,
        }


def _filler_pool(
    corpus: Sequence[tuple[str, Sequence[int]]],
) -> np.ndarray:
    """Token pool: documents concatenated in ascending id order."""
    ordered = sorted(corpus, key=lambda d: d[0])
    if not ordered:
        return np.empty(0, dtype=np.uint32)
    return np.concatenate(
        [np.asarray(ids, dtype=np.uint32) for _, ids in ordered]
    )


def make_haystack(
    pool: np.ndarray,
    spec: NeedleSpec,
    tokenizer: Tokenizer,
    seed: int = 0,
) -> HaystackInstance:
    """Insert the tokenized needle into filler at round(d * (L - n)).

    Filler is a contiguous pool slice whose start is hash-picked from
    (seed, length, depth), so each grid cell sees different surroundings
    while regeneration stays byte-identical.
    """
    needle_ids = tokenizer.encode(spec.needle)
    n = len(needle_ids)
    if n >= spec.length:
        raise ValueError(f"needle of {n} tokens does not fit length {spec.length}")
    filler_len = spec.length - n
    if len(pool) < filler_len:
        raise CorpusTooSmall(
            f"need {filler_len} filler tokens, corpus supplies {len(pool)}"
        )
    room = len(pool) - filler_len + 1
    start = stable_hash64(f"{seed}:{spec.length}:{spec.depth}") % room
    filler = pool[start : start + filler_len]
    offset = round(spec.depth * (spec.length - n))
    tokens = (
        [int(t) for t in filler[:offset]]
        + needle_ids
        + [int(t) for t in filler[offset:]]
    )
    return HaystackInstance(
        instance_id=f"hay-L{spec.length}-d{spec.depth:g}",
        tokens=tokens,
        needle_start=offset,
        needle_len=n,
        question=spec.question,
        answer=spec.answer,
        length=spec.length,
        depth=spec.depth,
    )


def haystack_grid(
    lengths: Sequence[int],
    depths: Sequence[float],
    needle: str,
    question: str,
    answer: str,
    corpus: Sequence[tuple[str, Sequence[int]]],
    tokenizer: Tokenizer,
    seed: int = 0,
) -> list[HaystackInstance]:
    """One instance per (length, depth) cell, lengths ascending."""
    if list(lengths) != sorted(lengths):
        raise ValueError("lengths must be ascending")
    pool = _filler_pool(corpus)
    instances = []
    for length in lengths:
        for depth in depths:
            spec = NeedleSpec(
                needle=needle,
                question=question,
                answer=answer,
                length=length,
                depth=depth,
            )
            instances.append(make_haystack(pool, spec, tokenizer, seed))
    return instances


def write_haystack_manifest(
    directory: str | Path, instances: Sequence[HaystackInstance]
) -> tuple[Path, Path]:
    """Persist instances as a CCTK token file plus a JSONL manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    token_path = directory / "haystack.cctk"
    manifest_path = directory / "manifest.jsonl"
    write_token_corpus(
        token_path, ((inst.instance_id, inst.tokens) for inst in instances)
    )
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.manifest_row(), sort_keys=True) + "\n")
    return token_path, manifest_path

"""Canonical document records and sharded corpus I/O.

The interchange format between every pipeline stage is JSONL: one
document object per line, UTF-8, no BOM. Each shard file carries a
sidecar manifest recording doc count, byte count, and an
order-sensitive content digest.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Iterator

from .errors import InvalidUtf8, MalformedRecord, MissingDocId, ParseError

MANIFEST_SUFFIX = ".manifest.json"


def dedup_normalize(text: str) -> str:
    """Canonical key used by every dedup stage.

    NFC + lowercase + collapse whitespace runs to one space + strip.
    Idempotent: normalize(normalize(x)) == normalize(x).
    """
    # str.split() and regex \s agree on the Unicode whitespace set; the
    # split/join form avoids regex overhead on this very hot path.
    text = unicodedata.normalize("NFC", text).lower()
    return " ".join(text.split())


@dataclass
class Document:
    """One unit of text moving through the pipeline.

    meta holds stage outputs under dotted keys namespaced by stage name
    (e.g. "quality.score"); values must stay JSON-serializable.
    """

    id: str
    source: str = ""
    url: str | None = None
    lang: str | None = None
    text: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        rec: dict[str, Any] = {"id": self.id, "source": self.source}
        if self.url is not None:
            rec["url"] = self.url
        if self.lang is not None:
            rec["lang"] = self.lang
        rec["text"] = self.text
        if self.meta:
            rec["meta"] = self.meta
        return json.dumps(rec, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Document":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise ParseError("document line is not an object")
        if "id" not in rec or not isinstance(rec["id"], str) or not rec["id"]:
            raise MissingDocId("document record has no usable id")
        return cls(
            id=rec["id"],
            source=rec.get("source", ""),
            url=rec.get("url"),
            lang=rec.get("lang"),
            text=rec.get("text", ""),
            meta=rec.get("meta", {}) or {},
        )


@dataclass
class ShardManifest:
    """Sidecar stats for one shard file.

    shard_path is the file's basename, never an absolute path, so a
    corpus directory can be moved or compared across run roots.
    content_digest is a 64-bit hash folded over doc ids in file order,
    so reordering or substituting any document changes it.
    """

    shard_path: str
    doc_count: int
    byte_count: int
    content_digest: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "shard_path": self.shard_path,
                "doc_count": self.doc_count,
                "byte_count": self.byte_count,
                "content_digest": self.content_digest,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ShardManifest":
        rec = json.loads(text)
        return cls(
            shard_path=rec["shard_path"],
            doc_count=rec["doc_count"],
            byte_count=rec["byte_count"],
            content_digest=rec["content_digest"],
        )

    @staticmethod
    def load(path: str | Path) -> "ShardManifest":
        return ShardManifest.from_json(Path(path).read_text(encoding="utf-8"))


def _digest_ids(ids: Iterable[str]) -> str:
    h = hashlib.blake2b(digest_size=8)
    for doc_id in ids:
        h.update(doc_id.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


@dataclass
class StageReport:
    """Removal accounting for one pipeline stage.

    docs_kept counts documents emitted; docs_born counts documents the
    stage created mid-flight (coherence segments), which then face the
    same keep/drop decisions. Invariant: docs_in + docs_born ==
    docs_kept + docs_dropped; with no births this reduces to the plain
    conservation rule docs_in == docs_kept + docs_dropped.
    Token counts use the whitespace/CJK word rule, not a tokenizer.
    """

    stage_name: str
    docs_in: int = 0
    docs_kept: int = 0
    docs_dropped: int = 0
    docs_born: int = 0
    tokens_in: int = 0
    tokens_kept: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)
    seconds: float = 0.0
    bytes_in: int = 0

    def count_drop(self, reason: str, n: int = 1) -> None:
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + n

    def merge(self, other: "StageReport") -> None:
        if other.stage_name != self.stage_name:
            raise ValueError("cannot merge reports from different stages")
        self.docs_in += other.docs_in
        self.docs_kept += other.docs_kept
        self.docs_dropped += other.docs_dropped
        self.docs_born += other.docs_born
        self.tokens_in += other.tokens_in
        self.tokens_kept += other.tokens_kept
        self.seconds += other.seconds
        self.bytes_in += other.bytes_in
        for reason, n in other.drop_reasons.items():
            self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + n

    def check(self) -> None:
        if self.docs_in + self.docs_born != self.docs_kept + self.docs_dropped:
            raise ValueError(
                f"stage {self.stage_name}: docs_in {self.docs_in} + born {self.docs_born}"
                f" != kept {self.docs_kept} + dropped {self.docs_dropped}"
            )
        if sum(self.drop_reasons.values()) != self.docs_dropped:
            raise ValueError(f"stage {self.stage_name}: drop reasons do not sum to docs_dropped")

    @property
    def docs_out(self) -> int:
        return self.docs_kept

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage_name": self.stage_name,
            "docs_in": self.docs_in,
            "docs_kept": self.docs_kept,
            "docs_dropped": self.docs_dropped,
            "docs_born": self.docs_born,
            "tokens_in": self.tokens_in,
            "tokens_kept": self.tokens_kept,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "seconds": self.seconds,
            "bytes_in": self.bytes_in,
        }

    @classmethod
    def from_dict(cls, rec: dict[str, Any]) -> "StageReport":
        return cls(
            stage_name=rec["stage_name"],
            docs_in=rec["docs_in"],
            docs_kept=rec["docs_kept"],
            docs_dropped=rec["docs_dropped"],
            docs_born=rec.get("docs_born", 0),
            tokens_in=rec.get("tokens_in", 0),
            tokens_kept=rec.get("tokens_kept", 0),
            drop_reasons=dict(rec.get("drop_reasons", {})),
            seconds=rec.get("seconds", 0.0),
            bytes_in=rec.get("bytes_in", 0),
        )


# --- JSONL shards ---------------------------------------------------------


def write_jsonl_shard(docs: Iterable[Document], path: str | Path) -> ShardManifest:
    """Write documents to one shard file plus its manifest sidecar.

    Writes to "<path>.partial" first and renames only on success, so an
    aborted write never leaves a file that looks complete.
    """
    path = Path(path)
    partial = path.with_name(path.name + ".partial")
    ids: list[str] = []
    byte_count = 0
    try:
        with open(partial, "wb") as fh:
            for doc in docs:
                line = doc.to_json().encode("utf-8") + b"\n"
                fh.write(line)
                byte_count += len(line)
                ids.append(doc.id)
    except Exception:
        raise
    os.replace(partial, path)
    manifest = ShardManifest(
        shard_path=path.name,
        doc_count=len(ids),
        byte_count=byte_count,
        content_digest=_digest_ids(ids),
    )
    Path(str(path) + MANIFEST_SUFFIX).write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def read_jsonl_shard(
    path: str | Path, skip_counts: dict[str, int] | None = None
) -> Iterator[Document]:
    """Yield documents from a shard file.

    Unparseable lines are counted into skip_counts (if given) and
    skipped; a line that parses but lacks an id is a hard error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield Document.from_json(line)
            except MissingDocId:
                raise
            except ParseError:
                if skip_counts is not None:
                    skip_counts["parse_error"] = skip_counts.get("parse_error", 0) + 1


def corpus_shard_paths(corpus_dir: str | Path) -> list[Path]:
    """Shard files of a corpus directory, in stable (sorted) order."""
    return sorted(p for p in Path(corpus_dir).glob("*.jsonl") if p.is_file())


def read_corpus_dir(corpus_dir: str | Path) -> Iterator[Document]:
    for shard in corpus_shard_paths(corpus_dir):
        yield from read_jsonl_shard(shard)


# --- WET (web-archive extracted-text) records -----------------------------

_HEADER_SPLIT = re.compile(rb"\r?\n\r?\n", re.S)


def parse_wet_record(raw: bytes) -> Document:
    """Parse one extracted-text record: header lines, blank line, payload.

    The header block must start with a WARC version line and include a
    Target-URI for conversion records. Payload must be valid UTF-8.
    """
    m = _HEADER_SPLIT.search(raw)
    if m is None:
        raise MalformedRecord("record has no blank line between headers and payload")
    header_block, payload = raw[: m.start()], raw[m.end() :]
    lines = header_block.replace(b"\r\n", b"\n").split(b"\n")
    if not lines or not lines[0].startswith(b"WARC/"):
        raise MalformedRecord("record does not start with a WARC version line")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if b":" not in line:
            continue
        name, _, value = line.partition(b":")
        headers[name.strip().decode("ascii", "replace").lower()] = value.strip().decode(
            "utf-8", "replace"
        )
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(str(exc)) from exc
    text = text.rstrip("\r\n")
    record_id = headers.get("warc-record-id", "")
    m_id = re.search(r"uuid:([0-9a-fA-F-]+)", record_id)
    if m_id:
        doc_id = "cc-" + m_id.group(1).lower()
    else:
        doc_id = "cc-" + hashlib.blake2b(raw, digest_size=12).hexdigest()
    return Document(
        id=doc_id,
        source="web-archive",
        url=headers.get("warc-target-uri") or None,
        text=text,
        meta={"warc_type": headers.get("warc-type", "")} if headers.get("warc-type") else {},
    )


def iter_wet_records(stream: BinaryIO) -> Iterator[bytes]:
    """Split a WET stream into raw records.

    Uses Content-Length when parseable and falls back to scanning for
    the next WARC version line, which tolerates mildly corrupt length
    headers.
    """
    pending = b""
    current: list[bytes] = []
    in_headers = False
    content_length: int | None = None

    def flush() -> bytes | None:
        if not current:
            return None
        rec = b"".join(current)
        current.clear()
        # inter-record blank-line separators are not records
        if not rec.strip():
            return None
        return rec

    line = stream.readline()
    while line:
        if line.startswith(b"WARC/") and not in_headers:
            rec = flush()
            if rec is not None:
                yield rec
            current.append(line)
            in_headers = True
            content_length = None
        elif in_headers:
            current.append(line)
            stripped = line.strip()
            if stripped == b"":
                in_headers = False
                if content_length is not None and content_length >= 0:
                    payload = stream.read(content_length)
                    current.append(payload)
                    rec = flush()
                    if rec is not None:
                        yield rec
            elif stripped.lower().startswith(b"content-length:"):
                try:
                    content_length = int(stripped.split(b":", 1)[1].strip())
                except ValueError:
                    content_length = None
        else:
            current.append(line)
        line = stream.readline()
        _ = pending
    rec = flush()
    if rec is not None:
        yield rec


def read_wet_corpus(
    path: str | Path, skip_counts: dict[str, int] | None = None
) -> Iterator[Document]:
    """Parse conversion records from a WET file; skip and count the rest."""

    def bump(reason: str) -> None:
        if skip_counts is not None:
            skip_counts[reason] = skip_counts.get(reason, 0) + 1

    with open(path, "rb") as fh:
        for raw in iter_wet_records(fh):
            try:
                doc = parse_wet_record(raw)
            except MalformedRecord:
                bump("malformed_record")
                continue
            except InvalidUtf8:
                bump("invalid_utf8")
                continue
            warc_type = doc.meta.get("warc_type", "")
            if warc_type and warc_type != "conversion":
                bump("non_conversion_record")
                continue
            if doc.url is None:
                bump("missing_target_uri")
                continue
            yield doc

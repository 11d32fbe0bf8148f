"""Heuristic rule filters: blocklists, structural checks, repetition, PII.

Verdicts are deterministic and read-only on the document text; the only
text-mutating operation is anonymize_pii. Ties at a threshold keep the
document: only strict exceedance drops.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from .corpus_io import Document, dedup_normalize
from .repstats import DUP_ORDERS, TOP_ORDERS, RepetitionStats, line_scan, repetition_stats
from .segmentation import split_words

__all__ = [
    "HeuristicConfig",
    "Blocklists",
    "FilterVerdict",
    "apply_blocklists",
    "structural_verdict",
    "repetition_verdict",
    "heuristic_verdict",
    "anonymize_pii",
    "load_blocklist_file",
    "repetition_stats",
    "RepetitionStats",
]


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    rule_id: str = ""

    def __post_init__(self) -> None:
        if self.keep and self.rule_id:
            raise ValueError("kept verdicts carry no rule_id")
        if not self.keep and not self.rule_id:
            raise ValueError("dropped verdicts must name a rule")


KEEP = FilterVerdict(True)


@dataclass
class HeuristicConfig:
    """Thresholds for the rule filters.

    Defaults follow the widely used repetition/structure rule family:
    duplicate line/paragraph fraction 0.30 (0.20 char-weighted), top
    2/3/4-gram character fraction 0.20/0.18/0.16, duplicated 5..10-gram
    character fraction 0.15 stepping down to 0.10.
    """

    min_words: int = 50
    max_words: int = 100_000
    max_symbol_word_ratio: float = 0.1
    max_ellipsis_line_frac: float = 0.3
    max_short_line_frac: float = 0.67
    short_line_max_words: int = 3
    max_incomplete_line_frac: float = 0.3
    min_alpha_word_frac: float = 0.8
    dup_line_frac: float = 0.30
    dup_para_frac: float = 0.30
    dup_line_char_frac: float = 0.20
    dup_para_char_frac: float = 0.20
    top_ngram_char_frac: dict[int, float] = field(
        default_factory=lambda: {2: 0.20, 3: 0.18, 4: 0.16}
    )
    dup_ngram_char_frac: dict[int, float] = field(
        default_factory=lambda: {5: 0.15, 6: 0.14, 7: 0.13, 8: 0.12, 9: 0.11, 10: 0.10}
    )

    def __post_init__(self) -> None:
        if not self.min_words < self.max_words:
            raise ValueError("min_words must be < max_words")
        for name in (
            "max_symbol_word_ratio",
            "max_ellipsis_line_frac",
            "max_short_line_frac",
            "max_incomplete_line_frac",
            "min_alpha_word_frac",
            "dup_line_frac",
            "dup_para_frac",
            "dup_line_char_frac",
            "dup_para_char_frac",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass
class Blocklists:
    url_substrings: set[str] = field(default_factory=set)
    domains: set[str] = field(default_factory=set)
    words: set[str] = field(default_factory=set)

    @classmethod
    def from_files(
        cls,
        url_substrings: str | Path | None = None,
        domains: str | Path | None = None,
        words: str | Path | None = None,
    ) -> "Blocklists":
        return cls(
            url_substrings=load_blocklist_file(url_substrings) if url_substrings else set(),
            domains=load_blocklist_file(domains) if domains else set(),
            words=load_blocklist_file(words) if words else set(),
        )


def load_blocklist_file(path: str | Path) -> set[str]:
    """One entry per line; '#' starts a comment; entries are normalized."""
    entries: set[str] = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            entries.add(dedup_normalize(line))
    return entries


_EDGE_PUNCT = ".,;:!?()[]{}<>\"'`“”‘’…«»。！？，"


def apply_blocklists(doc: Document, blocklists: Blocklists) -> FilterVerdict:
    """Drop on URL substring, domain, or whole-word match; else keep."""
    if doc.url and (blocklists.url_substrings or blocklists.domains):
        url = doc.url.lower()
        for sub in blocklists.url_substrings:
            if sub in url:
                return FilterVerdict(False, "url")
        if blocklists.domains:
            host = urlsplit(url).hostname or ""
            for dom in blocklists.domains:
                if host == dom or host.endswith("." + dom):
                    return FilterVerdict(False, "domain")
    if blocklists.words:
        doc_words: set[str] = set()
        for w in split_words(dedup_normalize(doc.text)):
            doc_words.add(w)
            # sentence punctuation sticks to the word after splitting
            bare = w.strip(_EDGE_PUNCT)
            if bare and bare != w:
                doc_words.add(bare)
        if doc_words & blocklists.words:
            return FilterVerdict(False, "word")
    return KEEP


# A line is complete when it ends with terminal punctuation (after
# trailing-space strip); covers ASCII and full-width CJK sentence ends.
_TERMINAL_CHARS = frozenset('.!?…"\'”’。！？」』;:)')
_LETTER_WORD = re.compile(r"\S*[^\W\d_]\S*")


def structural_verdict(
    doc: Document, cfg: HeuristicConfig, scan: tuple | None = None
) -> FilterVerdict:
    text = doc.text
    if scan is None:
        scan = line_scan(text, cfg.short_line_max_words)
    if scan is not None:
        # ASCII fast path: one native pass produces every count below.
        # "…" cannot occur in ASCII text, so the symbol tally drops it.
        (n_words, letter_words, n_hash, n_dots,
         n_lines, ellipsis, incomplete, short) = scan[8:16]
        if n_words < cfg.min_words:
            return FilterVerdict(False, "min_words")
        if n_words > cfg.max_words:
            return FilterVerdict(False, "max_words")
        if (n_hash + n_dots) / n_words > cfg.max_symbol_word_ratio:
            return FilterVerdict(False, "symbol_word_ratio")
        if n_lines:
            if ellipsis / n_lines > cfg.max_ellipsis_line_frac:
                return FilterVerdict(False, "ellipsis_line_frac")
            if incomplete / n_lines > cfg.max_incomplete_line_frac:
                return FilterVerdict(False, "incomplete_line_frac")
            if short / n_lines > cfg.max_short_line_frac:
                return FilterVerdict(False, "short_line_frac")
        if letter_words / n_words < cfg.min_alpha_word_frac:
            return FilterVerdict(False, "alpha_word_frac")
        return KEEP

    words = split_words(text)
    n_words = len(words)
    if n_words < cfg.min_words:
        return FilterVerdict(False, "min_words")
    if n_words > cfg.max_words:
        return FilterVerdict(False, "max_words")

    n_symbols = text.count("#") + text.count("…") + text.count("...")
    if n_symbols / n_words > cfg.max_symbol_word_ratio:
        return FilterVerdict(False, "symbol_word_ratio")

    lines = [ln.rstrip() for ln in text.split("\n")]
    lines = [ln for ln in lines if ln.strip()]
    if lines:
        n_lines = len(lines)
        ellipsis = sum(1 for ln in lines if ln.endswith("…") or ln.endswith("..."))
        if ellipsis / n_lines > cfg.max_ellipsis_line_frac:
            return FilterVerdict(False, "ellipsis_line_frac")
        incomplete = sum(1 for ln in lines if ln[-1] not in _TERMINAL_CHARS)
        if incomplete / n_lines > cfg.max_incomplete_line_frac:
            return FilterVerdict(False, "incomplete_line_frac")
        short = sum(1 for ln in lines if len(split_words(ln)) <= cfg.short_line_max_words)
        if short / n_lines > cfg.max_short_line_frac:
            return FilterVerdict(False, "short_line_frac")

    # Garbled-text proxy: most words should contain at least one letter
    # (alphabetic or CJK). Counted with one regex pass for speed.
    letter_words = len(_LETTER_WORD.findall(text))
    if letter_words / n_words < cfg.min_alpha_word_frac:
        return FilterVerdict(False, "alpha_word_frac")
    return KEEP


def repetition_verdict(stats: RepetitionStats, cfg: HeuristicConfig) -> FilterVerdict:
    if stats.dup_line_frac > cfg.dup_line_frac:
        return FilterVerdict(False, "dup_line_frac")
    if stats.dup_para_frac > cfg.dup_para_frac:
        return FilterVerdict(False, "dup_para_frac")
    if stats.dup_line_char_frac > cfg.dup_line_char_frac:
        return FilterVerdict(False, "dup_line_char_frac")
    if stats.dup_para_char_frac > cfg.dup_para_char_frac:
        return FilterVerdict(False, "dup_para_char_frac")
    for n in TOP_ORDERS:
        if stats.top_ngram_char_frac[n] > cfg.top_ngram_char_frac[n]:
            return FilterVerdict(False, f"top_{n}gram_char_frac")
    for n in DUP_ORDERS:
        if stats.dup_ngram_char_frac[n] > cfg.dup_ngram_char_frac[n]:
            return FilterVerdict(False, f"dup_{n}gram_char_frac")
    return KEEP


def heuristic_verdict(
    doc: Document, cfg: HeuristicConfig, blocklists: Blocklists | None = None
) -> FilterVerdict:
    """Full rule cascade in cheap-to-expensive order with short-circuit."""
    if blocklists is not None:
        verdict = apply_blocklists(doc, blocklists)
        if not verdict.keep:
            return verdict
    # one native scan feeds both the structural and the repetition rules
    scan = line_scan(doc.text, cfg.short_line_max_words)
    verdict = structural_verdict(doc, cfg, scan)
    if not verdict.keep:
        return verdict
    return repetition_verdict(repetition_stats(doc.text, scan), cfg)


# --- PII anonymization -----------------------------------------------------

_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")

# Candidates need phone shape: either a "+" country prefix or separated
# digit groups. A bare digit run (ISBN, serial number) never matches.
_PHONE_CAND = re.compile(
    r"(?<![\w.-])"
    r"(?:"
    r"\+\d{1,3}[ .-]?(?:\(\d{1,4}\)[ .-]?)?\d(?:[\d() .-]{4,18}\d)?"
    r"|"
    r"(?:\(\d{1,4}\)[ .-]?)?\d{1,4}(?:[ .-]\(?\d{1,4}\)?){1,6}"
    r")"
    r"(?![\w-])"
)

_DATE_SHAPES = (
    re.compile(r"\d{4}([-./ ])\d{1,2}\1\d{1,2}"),
    re.compile(r"\d{1,2}([-./ ])\d{1,2}\1\d{4}"),
)

_SEPARATORS = frozenset(" .-()")


def _phone_like(candidate: str) -> bool:
    digits = sum(1 for c in candidate if c.isdigit())
    if not 7 <= digits <= 15:
        return False
    if not (candidate.startswith("+") or any(c in _SEPARATORS for c in candidate)):
        return False
    for shape in _DATE_SHAPES:
        if shape.fullmatch(candidate):
            return False
    return True


def anonymize_pii(text: str) -> tuple[str, int]:
    """Mask emails and phone numbers in place; idempotent.

    Returns (new_text, replacement_count). The placeholders contain no
    digits or '@', so a second application never rewrites them.
    """
    count = 0

    def email_sub(m: re.Match) -> str:
        nonlocal count
        count += 1
        return "[EMAIL]"

    def phone_sub(m: re.Match) -> str:
        nonlocal count
        if _phone_like(m.group(0)):
            count += 1
            return "[PHONE]"
        return m.group(0)

    text = _EMAIL_RE.sub(email_sub, text)
    text = _PHONE_CAND.sub(phone_sub, text)
    return text, count

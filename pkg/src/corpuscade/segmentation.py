"""Line, paragraph, and word segmentation.

Word rule: split on Unicode whitespace, then each CJK ideograph counts
as one word on its own. The corpus is bilingual and Chinese text does
not use spaces, so length and repetition statistics would otherwise see
whole sentences as single words.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

# Han ideograph blocks (unified, extensions, compatibility). Kana and
# Hangul have their own word conventions and are deliberately excluded.
_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0x2F800, 0x2FA1F),
)

_CJK_CLASS = "".join(f"{chr(lo)}-{chr(hi)}" for lo, hi in _CJK_RANGES)
_HAS_CJK = re.compile(f"[{_CJK_CLASS}]")
# One CJK codepoint, or a run of anything that is neither whitespace nor CJK.
_WORD = re.compile(f"[{_CJK_CLASS}]|[^\\s{_CJK_CLASS}]+")


def is_cjk(cp: int) -> bool:
    for lo, hi in _CJK_RANGES:
        if lo <= cp <= hi:
            return True
    return False


def split_words(text: str) -> list[str]:
    """Words of a text under the whitespace + CJK-codepoint rule."""
    # ASCII text cannot contain CJK; skip the regex scan outright
    if text.isascii() or not _HAS_CJK.search(text):
        return text.split()
    return _WORD.findall(text)


def word_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character offsets of each word in the original text."""
    return [m.span() for m in _WORD.finditer(text)]


@dataclass(frozen=True)
class Segments:
    lines: list[str]
    paragraphs: list[str]
    words: list[str]


def segment(text: str) -> Segments:
    """Split text into lines, paragraphs, and words.

    Lines split on "\\n". Paragraphs are maximal runs of non-blank lines
    (a blank line is empty or whitespace-only). The empty string has one
    empty line, zero paragraphs, zero words.
    """
    lines = text.split("\n")
    paragraphs: list[str] = []
    current: list[str] = []
    for line in lines:
        if line.strip():
            current.append(line)
        elif current:
            paragraphs.append("\n".join(current))
            current = []
    if current:
        paragraphs.append("\n".join(current))
    return Segments(lines=lines, paragraphs=paragraphs, words=split_words(text))


def paragraph_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character offsets of each paragraph in the original text.

    text[start:end] is the exact paragraph content including interior
    newlines; separators between paragraphs are not covered.
    """
    spans: list[tuple[int, int]] = []
    offset = 0
    start: int | None = None
    last_end = 0
    for line in text.split("\n"):
        end = offset + len(line)
        if line.strip():
            if start is None:
                start = offset
            last_end = end
        else:
            if start is not None:
                spans.append((start, last_end))
                start = None
        offset = end + 1
    if start is not None:
        spans.append((start, last_end))
    return spans


def word_count(text: str) -> int:
    return len(split_words(text))

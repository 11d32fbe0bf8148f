"""Repetition statistics for the heuristic filter.

All statistics are computed over dedup-normalized content (NFC,
lowercase, collapsed whitespace):

- dup_line_frac / dup_para_frac: fraction of lines/paragraphs whose
  normalized content occurs more than once; every occurrence of a
  duplicated line counts. Lines/paragraphs that normalize to "" are
  ignored. The *_char_frac variants weight by normalized length.
- top_ngram_char_frac(n), n in {2,3,4}: count of the most frequent word
  n-gram times its single-spaced character length, over the
  single-spaced character length of the whole text, clamped to 1.
  Ties on count are broken toward the longer n-gram. A text whose most
  frequent n-gram occurs once has no repetition and scores 0.
- dup_ngram_char_frac(n), n in {5..10}: sum over n-grams with at least
  two non-overlapping occurrences (greedy left-to-right) of
  occurrences x single-spaced length, over total single-spaced length,
  clamped to 1.

The hot path hashes words and n-grams with 128-bit keys inside a numba
kernel; a pure-Python path with identical semantics is used when numba
is unavailable.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus_io import dedup_normalize
from .segmentation import segment, split_words

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


TOP_ORDERS = (2, 3, 4)
DUP_ORDERS = (5, 6, 7, 8, 9, 10)


@dataclass(frozen=True)
class RepetitionStats:
    dup_line_frac: float
    dup_para_frac: float
    dup_line_char_frac: float
    dup_para_char_frac: float
    top_ngram_char_frac: dict[int, float]
    dup_ngram_char_frac: dict[int, float]

    def as_flat_dict(self) -> dict[str, float]:
        flat = {
            "dup_line_frac": self.dup_line_frac,
            "dup_para_frac": self.dup_para_frac,
            "dup_line_char_frac": self.dup_line_char_frac,
            "dup_para_char_frac": self.dup_para_char_frac,
        }
        for n, v in self.top_ngram_char_frac.items():
            flat[f"top_{n}gram_char_frac"] = v
        for n, v in self.dup_ngram_char_frac.items():
            flat[f"dup_{n}gram_char_frac"] = v
        return flat


_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)
_POLY1 = np.uint64(0x9E3779B97F4A7C15)
_POLY2 = np.uint64(0xC2B2AE3D27D4EB4F)


@njit(cache=True)
def _scan_words_u8(buf):  # pragma: no cover - exercised via repetition_stats
    """Word FNV-1a hashes and codepoint lengths from normalized UTF-8.

    Input has single 0x20 separators only (dedup-normalized). CJK
    ideographs are emitted as standalone one-char words, matching
    segmentation.split_words.
    """
    nbytes = buf.shape[0]
    hashes = np.empty(nbytes + 1, np.uint64)
    clens = np.empty(nbytes + 1, np.int64)
    nw = 0
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    wlen = 0
    i = 0
    while i < nbytes:
        b0 = buf[i]
        if b0 == 0x20:
            if wlen > 0:
                hashes[nw] = h
                clens[nw] = wlen
                nw += 1
                h = np.uint64(0xCBF29CE484222325)
                wlen = 0
            i += 1
            continue
        if b0 < 0x80:
            cp = np.int64(b0)
            ln = 1
        elif b0 < 0xE0:
            cp = (np.int64(b0 & 0x1F) << 6) | np.int64(buf[i + 1] & 0x3F)
            ln = 2
        elif b0 < 0xF0:
            cp = (
                (np.int64(b0 & 0x0F) << 12)
                | (np.int64(buf[i + 1] & 0x3F) << 6)
                | np.int64(buf[i + 2] & 0x3F)
            )
            ln = 3
        else:
            cp = (
                (np.int64(b0 & 0x07) << 18)
                | (np.int64(buf[i + 1] & 0x3F) << 12)
                | (np.int64(buf[i + 2] & 0x3F) << 6)
                | np.int64(buf[i + 3] & 0x3F)
            )
            ln = 4
        is_cjk = (
            (0x3400 <= cp <= 0x4DBF)
            or (0x4E00 <= cp <= 0x9FFF)
            or (0xF900 <= cp <= 0xFAFF)
            or (0x20000 <= cp <= 0x2A6DF)
            or (0x2A700 <= cp <= 0x2B73F)
            or (0x2B740 <= cp <= 0x2B81F)
            or (0x2B820 <= cp <= 0x2CEAF)
            or (0x2F800 <= cp <= 0x2FA1F)
        )
        if is_cjk:
            if wlen > 0:
                hashes[nw] = h
                clens[nw] = wlen
                nw += 1
                h = np.uint64(0xCBF29CE484222325)
                wlen = 0
            ch = np.uint64(0xCBF29CE484222325)
            for j in range(ln):
                ch = (ch ^ np.uint64(buf[i + j])) * prime
            hashes[nw] = ch
            clens[nw] = 1
            nw += 1
        else:
            for j in range(ln):
                h = (h ^ np.uint64(buf[i + j])) * prime
            wlen += 1
        i += ln
    if wlen > 0:
        hashes[nw] = h
        clens[nw] = wlen
        nw += 1
    return nw, hashes, clens


# Byte-class tables for the ASCII fast path. Python's str.split() and
# str.strip() treat 0x1C-0x1F as whitespace, so the table must too.
_WS_U8 = np.zeros(256, np.uint8)
for _b in (0x09, 0x0A, 0x0B, 0x0C, 0x0D, 0x1C, 0x1D, 0x1E, 0x1F, 0x20):
    _WS_U8[_b] = 1
_TERMINAL_U8 = np.zeros(256, np.uint8)
for _b in b".!?\"';:)":
    _TERMINAL_U8[_b] = 1
_LETTER_U8 = np.zeros(256, np.uint8)
for _b in range(0x41, 0x5B):
    _LETTER_U8[_b] = 1
    _LETTER_U8[_b + 0x20] = 1
del _b


@njit(cache=True)
def _line_scan_u8(buf, short_max, ws, terminal, letter):  # pragma: no cover - via line_scan
    """One pass over raw ASCII text: unit keys, word arrays, rule counters.

    Emits 128-bit FNV keys and normalized codepoint lengths for every
    nonblank line and every paragraph (maximal run of nonblank lines,
    line contents joined by one space), exactly as dedup_normalize
    produces them; per-word FNV-1a hashes and lengths identical to
    _scan_words_u8 on the normalized text; and the counters
    structural_verdict needs.
    """
    n = buf.shape[0]
    n_newlines = 0
    n_hash = 0
    n_dots = 0
    pre_words = 0
    pre_in_word = False
    i = 0
    while i < n:
        b = buf[i]
        if ws[b] == 1:
            pre_in_word = False
            if b == 0x0A:
                n_newlines += 1
            i += 1
            continue
        if not pre_in_word:
            pre_in_word = True
            pre_words += 1
        if b == 0x23:
            n_hash += 1
            i += 1
        elif b == 0x2E and i + 2 < n and buf[i + 1] == 0x2E and buf[i + 2] == 0x2E:
            n_dots += 1
            i += 3
        else:
            i += 1

    max_lines = n_newlines + 1
    lh1 = np.empty(max_lines, np.uint64)
    lh2 = np.empty(max_lines, np.uint64)
    llen = np.empty(max_lines, np.int64)
    ph1 = np.empty(max_lines, np.uint64)
    ph2 = np.empty(max_lines, np.uint64)
    plen = np.empty(max_lines, np.int64)
    wh = np.empty(pre_words, np.uint64)
    wlen = np.empty(pre_words, np.int64)
    n_lines = 0
    n_paras = 0

    offset1 = np.uint64(0xCBF29CE484222325)
    offset2 = np.uint64(0xC2B2AE3D27D4EB4F)
    prime = np.uint64(0x100000001B3)
    space = np.uint64(0x20)

    words_total = 0
    letter_words = 0
    nonblank = 0
    n_ellipsis = 0
    n_incomplete = 0
    n_short = 0

    line_h1, line_h2 = offset1, offset2
    line_len = 0
    line_nw = 0
    line_start = 0
    lb = -1
    para_h1, para_h2 = offset1, offset2
    para_len = 0
    in_word = False
    word_letter = False
    word_h = offset1
    word_len = 0

    i = 0
    while i <= n:
        b = buf[i] if i < n else np.uint8(0x0A)
        if ws[b] == 1:
            if in_word:
                wh[words_total] = word_h
                wlen[words_total] = word_len
                words_total += 1
                if word_letter:
                    letter_words += 1
                in_word = False
                word_letter = False
                word_h = offset1
                word_len = 0
            if b == 0x0A:
                if line_nw > 0:
                    nonblank += 1
                    if terminal[buf[lb]] == 0:
                        n_incomplete += 1
                    if (
                        lb - 2 >= line_start
                        and buf[lb] == 0x2E
                        and buf[lb - 1] == 0x2E
                        and buf[lb - 2] == 0x2E
                    ):
                        n_ellipsis += 1
                    if line_nw <= short_max:
                        n_short += 1
                    lh1[n_lines] = line_h1
                    lh2[n_lines] = line_h2
                    llen[n_lines] = line_len
                    n_lines += 1
                elif para_len > 0:
                    ph1[n_paras] = para_h1
                    ph2[n_paras] = para_h2
                    plen[n_paras] = para_len
                    n_paras += 1
                    para_h1, para_h2 = offset1, offset2
                    para_len = 0
                line_h1, line_h2 = offset1, offset2
                line_len = 0
                line_nw = 0
                line_start = i + 1
        else:
            lb = i
            if not in_word:
                in_word = True
                if line_nw > 0:
                    line_h1 = (line_h1 ^ space) * prime
                    line_h2 = (line_h2 ^ space) * prime
                    line_len += 1
                    para_h1 = (para_h1 ^ space) * prime
                    para_h2 = (para_h2 ^ space) * prime
                    para_len += 1
                elif para_len > 0:
                    para_h1 = (para_h1 ^ space) * prime
                    para_h2 = (para_h2 ^ space) * prime
                    para_len += 1
                line_nw += 1
            if letter[b] == 1:
                word_letter = True
            cu = np.uint64(b + 0x20) if 0x41 <= b <= 0x5A else np.uint64(b)
            line_h1 = (line_h1 ^ cu) * prime
            line_h2 = (line_h2 ^ cu) * prime
            line_len += 1
            para_h1 = (para_h1 ^ cu) * prime
            para_h2 = (para_h2 ^ cu) * prime
            para_len += 1
            word_h = (word_h ^ cu) * prime
            word_len += 1
        i += 1
    if para_len > 0:
        ph1[n_paras] = para_h1
        ph2[n_paras] = para_h2
        plen[n_paras] = para_len
        n_paras += 1

    return (
        n_lines, lh1, lh2, llen, n_paras, ph1, ph2, plen,
        words_total, letter_words, n_hash, n_dots,
        nonblank, n_ellipsis, n_incomplete, n_short,
        wh, wlen,
    )


def line_scan(text: str, short_max: int):
    """Fast-path scan of an ASCII text; None when the kernel cannot apply."""
    if not _HAVE_NUMBA or not text.isascii():
        return None
    buf = np.frombuffer(text.encode("utf-8"), dtype=np.uint8)
    return _line_scan_u8(buf, short_max, _WS_U8, _TERMINAL_U8, _LETTER_U8)


def _unit_fracs_from_keys(h1, h2, lens, count) -> tuple[float, float]:
    if count == 0:
        return 0.0, 0.0
    keys = list(zip(h1[:count].tolist(), h2[:count].tolist()))
    sizes = lens[:count].tolist()
    counts = Counter(keys)
    total_chars = 0
    dup_n = 0
    dup_chars = 0
    for key, size in zip(keys, sizes):
        total_chars += size
        if counts[key] > 1:
            dup_n += 1
            dup_chars += size
    char_frac = dup_chars / total_chars if total_chars else 0.0
    return dup_n / count, char_frac


@njit(cache=True)
def _all_orders_u8(h, cum):  # pragma: no cover - via repetition_stats
    """Order statistics for every tracked n at once.

    Returns (top_count[3], top_chars[3]) for orders 2..4 and
    dup_char_sum[6] for orders 5..10. 128-bit polynomial keys over word
    hashes, one open-addressing table reused across orders; greedy
    non-overlapping occurrence counting for the dup sums.
    """
    W = h.shape[0]
    top_cnt = np.zeros(3, np.int64)
    top_ch = np.zeros(3, np.int64)
    dup_sum = np.zeros(6, np.int64)
    if W < 2:
        return top_cnt, top_ch, dup_sum
    p1 = np.uint64(0x9E3779B97F4A7C15)
    p2 = np.uint64(0xC2B2AE3D27D4EB4F)
    mixc = np.uint64(0xBF58476D1CE4E5B9)
    s29 = np.uint64(29)
    cap = 1
    while cap < 2 * (W - 1):
        cap <<= 1
    mask = np.uint64(cap - 1)
    tk1 = np.empty(cap, np.uint64)
    tk2 = np.empty(cap, np.uint64)
    tcnt = np.zeros(cap, np.int64)
    tch = np.empty(cap, np.int64)
    tlast = np.empty(cap, np.int64)
    tacc = np.empty(cap, np.int64)

    for n in range(2, 11):
        m = W - n + 1
        if m <= 0:
            break
        if n > 2:
            for s in range(cap):
                tcnt[s] = 0
        pow1 = np.uint64(1)
        pow2 = np.uint64(1)
        for _ in range(n - 1):
            pow1 *= p1
            pow2 *= p2
        k1 = np.uint64(0)
        k2 = np.uint64(0)
        has_rep = False
        for j in range(n):
            k1 = k1 * p1 + h[j]
            k2 = k2 * p2 + h[j]
        for i in range(m):
            z = k1 ^ (k2 * mixc)
            z ^= z >> s29
            slot = np.int64(z & mask)
            while True:
                if tcnt[slot] == 0:
                    tk1[slot] = k1
                    tk2[slot] = k2
                    tcnt[slot] = 1
                    tch[slot] = cum[i + n] - cum[i] + (n - 1)
                    tacc[slot] = 0
                    break
                if tk1[slot] == k1 and tk2[slot] == k2:
                    tcnt[slot] += 1
                    has_rep = True
                    break
                slot = (slot + 1) & np.int64(mask)
            if i + n < W:
                k1 = (k1 - h[i] * pow1) * p1 + h[i + n]
                k2 = (k2 - h[i] * pow2) * p2 + h[i + n]

        # the dup pass can only accumulate on counts >= 2
        if n >= 5 and has_rep:
            k1 = np.uint64(0)
            k2 = np.uint64(0)
            for j in range(n):
                k1 = k1 * p1 + h[j]
                k2 = k2 * p2 + h[j]
            for i in range(m):
                z = k1 ^ (k2 * mixc)
                z ^= z >> s29
                slot = np.int64(z & mask)
                while not (tk1[slot] == k1 and tk2[slot] == k2):
                    slot = (slot + 1) & np.int64(mask)
                if tcnt[slot] >= 2:
                    if tacc[slot] == 0 or i >= tlast[slot] + n:
                        tacc[slot] += 1
                        tlast[slot] = i
                if i + n < W:
                    k1 = (k1 - h[i] * pow1) * p1 + h[i + n]
                    k2 = (k2 - h[i] * pow2) * p2 + h[i + n]

        best_c = np.int64(0)
        best_ch = np.int64(0)
        dsum = np.int64(0)
        for slot in range(cap):
            c = tcnt[slot]
            if c == 0:
                continue
            if n <= 4:
                if c > best_c or (c == best_c and tch[slot] > best_ch):
                    best_c = c
                    best_ch = tch[slot]
            elif tacc[slot] >= 2:
                dsum += tacc[slot] * tch[slot]
        if n <= 4:
            top_cnt[n - 2] = best_c
            top_ch[n - 2] = best_ch
        else:
            dup_sum[n - 5] = dsum
    return top_cnt, top_ch, dup_sum


def _order_stats_py(words: list[str], n: int, need_dup: bool) -> tuple[int, int, int]:
    """Pure-Python order statistics; same semantics as the kernel."""
    W = len(words)
    m = W - n + 1
    if m <= 0:
        return 0, 0, 0
    grams = [tuple(words[i : i + n]) for i in range(m)]
    counts = Counter(grams)

    def chars(g: tuple[str, ...]) -> int:
        return sum(len(w) for w in g) + (n - 1)

    top_cnt, top_ch = 0, 0
    for g, c in counts.items():
        ch = chars(g)
        if c > top_cnt or (c == top_cnt and ch > top_ch):
            top_cnt, top_ch = c, ch
    dup_sum = 0
    if need_dup:
        positions: dict[tuple[str, ...], list[int]] = {}
        for i, g in enumerate(grams):
            if counts[g] >= 2:
                positions.setdefault(g, []).append(i)
        for g, pos in positions.items():
            acc = 0
            last = -n
            for i in pos:
                if acc == 0 or i >= last + n:
                    acc += 1
                    last = i
            if acc >= 2:
                dup_sum += acc * chars(g)
    return top_cnt, top_ch, dup_sum


def _dup_unit_fracs(units: list[str]) -> tuple[float, float]:
    """(occurrence fraction, char-weighted fraction) of duplicated units."""
    keys = [dedup_normalize(u) for u in units]
    keys = [k for k in keys if k]
    if not keys:
        return 0.0, 0.0
    counts = Counter(keys)
    total_chars = sum(len(k) for k in keys)
    dup_n = sum(1 for k in keys if counts[k] > 1)
    dup_chars = sum(len(k) for k in keys if counts[k] > 1)
    frac = dup_n / len(keys)
    char_frac = dup_chars / total_chars if total_chars else 0.0
    return frac, char_frac


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _word_arrays(norm: str) -> tuple[np.ndarray, np.ndarray]:
    if _HAVE_NUMBA:
        buf = np.frombuffer(norm.encode("utf-8"), dtype=np.uint8)
        nw, hashes, clens = _scan_words_u8(buf)
        return hashes[:nw], clens[:nw]
    words = split_words(norm)
    hashes = np.empty(len(words), np.uint64)
    clens = np.empty(len(words), np.int64)
    for i, w in enumerate(words):
        h = 0xCBF29CE484222325
        for b in w.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        hashes[i] = h
        clens[i] = len(w)
    return hashes, clens


def _order_fracs_u8(
    hashes: np.ndarray, clens: np.ndarray
) -> tuple[dict[int, float], dict[int, float]]:
    top: dict[int, float] = {n: 0.0 for n in TOP_ORDERS}
    dup: dict[int, float] = {n: 0.0 for n in DUP_ORDERS}
    W = len(hashes)
    total_chars = int(clens.sum()) + max(W - 1, 0)
    if W > 0 and total_chars > 0:
        cum = np.zeros(W + 1, np.int64)
        np.cumsum(clens, out=cum[1:])
        tc, tch, ds = _all_orders_u8(hashes, cum)
        for i, n in enumerate(TOP_ORDERS):
            c, ch = int(tc[i]), int(tch[i])
            top[n] = _clamp01(c * ch / total_chars) if c >= 2 else 0.0
        for i, n in enumerate(DUP_ORDERS):
            dup[n] = _clamp01(int(ds[i]) / total_chars)
    return top, dup


def repetition_stats(text: str, scan: tuple | None = None) -> RepetitionStats:
    """All repetition statistics of a text.

    scan, when given, must be line_scan(text, ...) for this exact text;
    callers that already ran the scan pass it to avoid a second pass.
    """
    if scan is None:
        scan = line_scan(text, 0)
    if scan is not None:
        n_lines, lh1, lh2, llen, n_paras, ph1, ph2, plen = scan[:8]
        line_frac, line_char_frac = _unit_fracs_from_keys(lh1, lh2, llen, n_lines)
        para_frac, para_char_frac = _unit_fracs_from_keys(ph1, ph2, plen, n_paras)
        top, dup = _order_fracs_u8(scan[16], scan[17])
        return RepetitionStats(
            dup_line_frac=line_frac,
            dup_para_frac=para_frac,
            dup_line_char_frac=line_char_frac,
            dup_para_char_frac=para_char_frac,
            top_ngram_char_frac=top,
            dup_ngram_char_frac=dup,
        )

    norm = dedup_normalize(text)
    segs = segment(text)
    line_frac, line_char_frac = _dup_unit_fracs(segs.lines)
    para_frac, para_char_frac = _dup_unit_fracs(segs.paragraphs)

    top: dict[int, float] = {n: 0.0 for n in TOP_ORDERS}
    dup: dict[int, float] = {n: 0.0 for n in DUP_ORDERS}
    if norm:
        hashes, clens = _word_arrays(norm)
        if _HAVE_NUMBA:
            top, dup = _order_fracs_u8(hashes, clens)
        else:
            W = len(hashes)
            total_chars = int(clens.sum()) + max(W - 1, 0)
            if W > 0 and total_chars > 0:
                words = split_words(norm)
                for n in TOP_ORDERS:
                    c, ch, _ = _order_stats_py(words, n, False)
                    top[n] = _clamp01(c * ch / total_chars) if c >= 2 else 0.0
                for n in DUP_ORDERS:
                    _, _, ds = _order_stats_py(words, n, True)
                    dup[n] = _clamp01(ds / total_chars)

    return RepetitionStats(
        dup_line_frac=line_frac,
        dup_para_frac=para_frac,
        dup_line_char_frac=line_char_frac,
        dup_para_char_frac=para_char_frac,
        top_ngram_char_frac=top,
        dup_ngram_char_frac=dup,
    )


def warmup() -> None:
    """Force JIT compilation outside any timed section."""
    repetition_stats("warm up the kernels with a few words repeated a few words repeated")

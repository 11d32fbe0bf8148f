"""Synthetic corpora with planted artifacts and recorded ground truth.

Every generator is deterministic in its (count, seed) arguments. Planted
documents carry a "synth.kind" meta tag and the corpus-level generators
return a truth table naming the planted ids, so tests can hold pipeline
behavior against known answers instead of eyeballing output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus_io import Document
from .dedup import exact_jaccard, shingle_set

# Function words come in two disjoint registers plus their union. Docs
# built from one register share no function words with the other, so a
# patchwork of (register, topic) paragraphs has near-orthogonal hashed
# features while still reading like prose to the quality classifier.
_DETS = ("the", "this", "its", "that", "each", "a", "these", "their", "our", "every")
_VERBS = (
    "is", "was", "has", "shows", "includes", "remains", "covers", "holds",
    "are", "were", "have", "showed", "provides", "became", "formed", "keeps",
)
_PREPS = (
    "of", "in", "on", "for", "under", "during", "across",
    "from", "with", "by", "at", "between", "after", "through",
)
_ADJS = (
    "new", "small", "early", "major", "recent", "modern", "common", "central",
    "old", "large", "late", "minor", "ancient", "simple", "rare", "notable",
)
_CONJS = ("and", "while", "because", "but", "although")

_HALF = {
    "mixed": slice(None),
    "r1": slice(0, None, 2),
    "r2": slice(1, None, 2),
}


def _register(name: str) -> tuple[tuple[str, ...], ...]:
    s = _HALF[name]
    return (_DETS[s], _VERBS[s], _PREPS[s], _ADJS[s], _CONJS[s])

TOPIC_POOLS: dict[str, tuple[str, ...]] = {
    "knowledge": tuple(
        "history science theory system method research study result evidence "
        "century region population structure process development language "
        "culture species energy climate material element analysis function "
        "university museum archive publication reference".split()
    ),
    "news": tuple(
        "government minister election report statement official spokesman "
        "economy market policy parliament committee investigation announcement "
        "budget agreement crisis conference president reporter deadline "
        "authorities decision negotiations summit legislation".split()
    ),
    "fiction": tuple(
        "shadow whisper journey stranger garden winter lantern harbor silence "
        "memory dream mirror storm castle forest river dawn twilight secret "
        "letter promise voyage candle sorrow wonder horizon threshold".split()
    ),
    "forum": tuple(
        "thread reply posted edit update thanks question answer issue problem "
        "works tried anyone help please setup config version install error "
        "fixed solved bump topic moderator upvote newbie".split()
    ),
    "ads": tuple(
        "buy cheap discount sale offer deal free shipping limited exclusive "
        "bonus subscribe click order now guarantee price lowest save coupon "
        "promo winner credit unlock premium trial upgrade".split()
    ),
    "other": tuple(
        "recipe flour sugar oven minutes stir garden plant water soil season "
        "travel hotel flight ticket museum weather train station luggage "
        "fitness training stretch routine breakfast".split()
    ),
}

UNSAFE_WORDS = tuple(
    "violence weapon attack gore brutal explicit graphic extremist propaganda "
    "assault menace bloodshed hatred incite hostile".split()
)

# Common CJK characters for the second language id class.
CJK_CHARS = (
    "的一是在不了有人这中大为上个国我以要他时来用们生到作地于出就分对成会"
    "可主发年动同工也能下过子说产种面而方后多定行学法所民得经十三之进着等"
    "部度家电力里如水化高自二理起小物现实加量都两体制机当使点从业本去把性"
)



def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _zipf_probs(size: int) -> np.ndarray:
    w = 1.0 / np.arange(1, size + 1, dtype=np.float64)
    return w / w.sum()


def sample_words(rng: np.random.Generator, pool: tuple[str, ...] | list[str], n: int) -> list[str]:
    idx = rng.choice(len(pool), size=n, p=_zipf_probs(len(pool)))
    return [pool[i] for i in idx]


def _noun_phrase(rng: np.random.Generator, nouns, dets, adjs) -> list[str]:
    out = [dets[int(rng.integers(0, len(dets)))]]
    if rng.random() < 0.4:
        out.append(adjs[int(rng.integers(0, len(adjs)))])
    out.append(nouns[int(rng.choice(len(nouns), p=_zipf_probs(len(nouns))))])
    return out


def make_sentence(
    rng: np.random.Generator,
    pool: tuple[str, ...] | list[str],
    register: str = "mixed",
) -> str:
    """One slot-grammar sentence: NP V NP [P NP] [conj clause]."""
    dets, verbs, preps, adjs, conjs = _register(register)

    def clause() -> list[str]:
        words = _noun_phrase(rng, pool, dets, adjs)
        words.append(verbs[int(rng.integers(0, len(verbs)))])
        words += _noun_phrase(rng, pool, dets, adjs)
        if rng.random() < 0.6:
            words.append(preps[int(rng.integers(0, len(preps)))])
            words += _noun_phrase(rng, pool, dets, adjs)
        return words

    words = clause()
    if rng.random() < 0.3:
        words.append(conjs[int(rng.integers(0, len(conjs)))])
        words += clause()
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def make_paragraph(
    rng: np.random.Generator,
    pool: tuple[str, ...] | list[str],
    sentences: tuple[int, int] = (2, 5),
    register: str = "mixed",
) -> str:
    k = int(rng.integers(sentences[0], sentences[1] + 1))
    return " ".join(make_sentence(rng, pool, register) for _ in range(k))


def make_doc_text(
    rng: np.random.Generator,
    topic: str = "knowledge",
    min_words: int = 60,
    max_words: int = 110,
    register: str = "mixed",
) -> str:
    pool = TOPIC_POOLS[topic]
    target = int(rng.integers(min_words, max_words + 1))
    paras: list[str] = []
    total = 0
    while total < target:
        p = make_paragraph(rng, pool, register=register)
        paras.append(p)
        total += len(p.split())
    return "\n\n".join(paras)


def make_cjk_text(rng: np.random.Generator, n_chars: int = 300) -> str:
    chars = [CJK_CHARS[i] for i in rng.choice(len(CJK_CHARS), size=n_chars, p=_zipf_probs(len(CJK_CHARS)))]
    # periods every 12..20 chars so the text has sentence texture
    out: list[str] = []
    i = 0
    while i < len(chars):
        step = int(rng.integers(12, 21))
        out.append("".join(chars[i : i + step]) + "。")
        i += step
    return "".join(out)


def shuffle_words(rng: np.random.Generator, text: str) -> str:
    words = text.split()
    rng.shuffle(words)
    return " ".join(words)


def scramble_sentences(rng: np.random.Generator, text: str) -> str:
    """Shuffle word order inside each sentence, keeping sentence shape.

    Lines still end in terminal punctuation, so the structural line
    rules pass and only the learned scorers can tell the doc is broken.
    """
    paras_out: list[str] = []
    for para in text.split("\n\n"):
        sents_out: list[str] = []
        for sent in para.split(". "):
            words = [w.lower().rstrip(".") for w in sent.split()]
            rng.shuffle(words)
            if not words:
                continue
            words[0] = words[0].capitalize()
            sents_out.append(" ".join(words) + ".")
        paras_out.append(" ".join(sents_out))
    return "\n\n".join(paras_out)


# --- planted artifact builders ---------------------------------------------


def make_near_duplicate(
    rng: np.random.Generator,
    text: str,
    lo: float = 0.75,
    hi: float = 0.95,
    margin: int = 60,
) -> tuple[str, float]:
    """Contiguous-block edit of text with measured shingle Jaccard in [lo, hi].

    The edit stays `margin` words away from both ends, so prefix and
    suffix remain long shared word runs. The replacement block is fresh
    prose from another topic, so the edited doc still reads like text.
    """
    words = text.split()
    n = len(words)
    if n < 2 * margin + 30:
        raise ValueError(f"base doc too short for a near duplicate: {n} words")
    base_shingles = shingle_set(text)
    for attempt in range(60):
        b = int(rng.integers(1, 25)) + attempt // 20  # widen if struggling
        start = int(rng.integers(margin, n - margin - b + 1))
        repl: list[str] = []
        while len(repl) < b:
            repl += make_sentence(rng, TOPIC_POOLS["other"]).split()
        cand_words = words[:start] + repl[:b] + words[start + b :]
        cand = " ".join(cand_words)
        j = exact_jaccard(base_shingles, shingle_set(cand))
        if lo <= j <= hi:
            return cand, j
    raise AssertionError("could not hit the target Jaccard band; widen the margins")


def make_shared_passage(rng: np.random.Generator, n_words: int = 200) -> str:
    sents: list[str] = []
    total = 0
    while total < n_words:
        s = make_sentence(rng, TOPIC_POOLS["knowledge"])
        sents.append(s)
        total += len(s.split())
    # trim to the word target without breaking the last sentence's words
    words = " ".join(sents).split()
    return " ".join(words[:n_words])


def make_boilerplate_text(rng: np.random.Generator) -> str:
    line = make_sentence(rng, TOPIC_POOLS["forum"])
    filler = make_paragraph(rng, TOPIC_POOLS["forum"])
    return "\n".join([line] * 12 + [filler])


def make_garbled_text(rng: np.random.Generator) -> str:
    sym = list("@#$%^&*()_+=~|<>{}[]\\/")
    words = []
    for _ in range(80):
        w = "".join(sym[i] for i in rng.choice(len(sym), size=int(rng.integers(2, 6))))
        words.append(w)
    return " ".join(words)


def make_patchwork_text(rng: np.random.Generator) -> str:
    """Register-and-topic patchwork with one coherent adjacent pair.

    Paragraphs share neither topic nouns nor function words across
    boundaries except for one same-(register, topic) pair, so boundary
    similarities look like (0, 0, high, 0): the mean lands in the
    segment band and the weak boundaries are clean cut points.
    """
    topics = list(TOPIC_POOLS)
    rng.shuffle(topics)
    a, b, c, d = topics[:4]
    paras = [
        make_paragraph(rng, TOPIC_POOLS[a], (2, 3), register="r1"),
        make_paragraph(rng, TOPIC_POOLS[b], (2, 3), register="r2"),
        make_paragraph(rng, TOPIC_POOLS[c], (2, 3), register="r1"),
        make_paragraph(rng, TOPIC_POOLS[c], (2, 3), register="r1"),
        make_paragraph(rng, TOPIC_POOLS[d], (2, 3), register="r2"),
    ]
    return "\n\n".join(paras)


def make_incoherent_text(rng: np.random.Generator) -> str:
    """Every adjacent pair disjoint in both topic and register."""
    topics = list(TOPIC_POOLS)
    rng.shuffle(topics)
    return "\n\n".join(
        make_paragraph(rng, TOPIC_POOLS[t], (2, 3), register="r1" if i % 2 == 0 else "r2")
        for i, t in enumerate(topics[:4])
    )


def make_unsafe_text(rng: np.random.Generator) -> str:
    return "\n\n".join(make_paragraph(rng, UNSAFE_WORDS, (3, 5)) for _ in range(3))


def make_ad_text(rng: np.random.Generator) -> str:
    return "\n\n".join(make_paragraph(rng, TOPIC_POOLS["ads"], (3, 5)) for _ in range(2))


# --- training material -------------------------------------------------------


def quality_task(n_per_class: int, seed: int = 0) -> tuple[list[str], list[str]]:
    """Structured prose positives vs word-shuffled negatives."""
    rng = _rng(seed)
    topics = list(TOPIC_POOLS)
    positives = [
        make_doc_text(rng, topics[int(rng.integers(0, len(topics)))]) for _ in range(n_per_class)
    ]
    negatives = [
        shuffle_words(rng, make_doc_text(rng, topics[int(rng.integers(0, len(topics)))]))
        for _ in range(n_per_class)
    ]
    return positives, negatives


def safety_task(n_per_class: int, seed: int = 0) -> tuple[list[str], list[str]]:
    """Safe prose positives vs keyword-seeded unsafe negatives."""
    rng = _rng(seed)
    topics = list(TOPIC_POOLS)
    safe = [
        make_doc_text(rng, topics[int(rng.integers(0, len(topics)))]) for _ in range(n_per_class)
    ]
    unsafe = [make_unsafe_text(rng) for _ in range(n_per_class)]
    return safe, unsafe


def topic_task(n_per_label: int, seed: int = 0) -> list[tuple[str, str]]:
    rng = _rng(seed)
    out: list[tuple[str, str]] = []
    for label in TOPIC_POOLS:
        for _ in range(n_per_label):
            out.append((label, make_doc_text(rng, label)))
    return out


def langid_task(seed: int = 0, chars_per_lang: int = 4_000) -> list[tuple[str, str]]:
    rng = _rng(seed)
    en: list[str] = []
    total = 0
    while total < chars_per_lang:
        t = make_doc_text(rng)
        en.append(t)
        total += len(t)
    return [("en", "\n\n".join(en)), ("zh", make_cjk_text(rng, chars_per_lang))]


def lm_corpus(n_docs: int, seed: int = 0) -> list[str]:
    rng = _rng(seed)
    topics = list(TOPIC_POOLS)
    return [
        make_doc_text(rng, topics[int(rng.integers(0, len(topics)))]) for _ in range(n_docs)
    ]


# --- corpus-level generators -------------------------------------------------


@dataclass
class PlantedTruth:
    """Ids of every planted artifact, keyed by kind."""

    exact_pairs: list[tuple[str, str]] = field(default_factory=list)
    near_pairs: list[tuple[str, str, float]] = field(default_factory=list)
    passage_ids: list[str] = field(default_factory=list)
    passage_text: str = ""
    footer_ids: list[str] = field(default_factory=list)
    footer_text: str = ""
    by_kind: dict[str, list[str]] = field(default_factory=dict)

    def note(self, kind: str, doc_id: str) -> None:
        self.by_kind.setdefault(kind, []).append(doc_id)


def _doc(doc_id: str, text: str, kind: str, source: str = "common-crawl") -> Document:
    return Document(id=doc_id, source=source, text=text, meta={"synth.kind": kind})


def dedup_corpus(n: int = 2_000, seed: int = 0) -> tuple[list[Document], PlantedTruth]:
    """Corpus for exercising the dedup cascade.

    Plants exact duplicates, measured-Jaccard near duplicates, a shared
    200-word passage, and a footer paragraph repeated past the paragraph
    cap; the remainder is unique clean prose.
    """
    rng = _rng(seed)
    truth = PlantedTruth()
    n_exact, n_near, n_passage, n_footer = 150, 150, 8, 120
    n_clean = n - 2 * n_exact - 2 * n_near - n_passage - n_footer
    if n_clean < 10:
        raise ValueError(f"corpus size {n} too small for the planted mix")

    topics = list(TOPIC_POOLS)
    texts: list[tuple[str, str]] = []  # (kind, text)
    for _ in range(n_clean):
        topic = topics[int(rng.integers(0, len(topics)))]
        texts.append(("clean", make_doc_text(rng, topic, 150, 250)))
    for _ in range(n_exact):
        base = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))], 150, 250)
        texts.append(("exact_base", base))
        texts.append(("exact_dup", base))
    for _ in range(n_near):
        base = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))], 180, 240)
        dup, j = make_near_duplicate(rng, base)
        texts.append(("near_base", base))
        texts.append((f"near_dup:{j:.6f}", dup))
    truth.passage_text = make_shared_passage(rng)
    for _ in range(n_passage):
        host = make_doc_text(rng, "news", 120, 180)
        paras = host.split("\n\n")
        at = int(rng.integers(0, len(paras) + 1))
        paras.insert(at, truth.passage_text)
        texts.append(("passage_host", "\n\n".join(paras)))
    truth.footer_text = make_paragraph(rng, TOPIC_POOLS["forum"], (2, 2))
    for _ in range(n_footer):
        body = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))], 120, 180)
        texts.append(("footer_host", body + "\n\n" + truth.footer_text))

    order = rng.permutation(len(texts))
    docs: list[Document] = []
    pending_pair: dict[str, str] = {}
    for new_idx, old_idx in enumerate(order):
        kind, text = texts[old_idx]
        doc_id = f"doc-{new_idx:06d}"
        docs.append(_doc(doc_id, text, kind.split(":")[0]))
        truth.note(kind.split(":")[0], doc_id)
        pending_pair[str(old_idx)] = doc_id
    # reconstruct planted pairs from generation adjacency (base at i, dup at i+1)
    i = 0
    while i < len(texts):
        kind = texts[i][0]
        if kind == "exact_base":
            truth.exact_pairs.append((pending_pair[str(i)], pending_pair[str(i + 1)]))
            i += 2
        elif kind == "near_base":
            j = float(texts[i + 1][0].split(":")[1])
            truth.near_pairs.append((pending_pair[str(i)], pending_pair[str(i + 1)], j))
            i += 2
        else:
            if kind == "passage_host":
                truth.passage_ids.append(pending_pair[str(i)])
            elif kind == "footer_host":
                truth.footer_ids.append(pending_pair[str(i)])
            i += 1
    return docs, truth


def pipeline_corpus(n: int = 10_000, seed: int = 0) -> tuple[list[Document], PlantedTruth]:
    """Full-cascade corpus: filters, dedup, and sampling all get work.

    Mix: clean prose across topics and sources, a CJK slice, garbled and
    boilerplate docs, too-short docs, shuffled low-quality docs, unsafe
    docs, ads, patchwork/incoherent docs, exact and near duplicates, a
    shared passage group, and a repeated footer.
    """
    rng = _rng(seed)
    truth = PlantedTruth()
    counts = {
        "cjk": int(0.03 * n),
        "garbled": int(0.02 * n),
        "boilerplate": int(0.02 * n),
        "too_short": int(0.01 * n),
        "shuffled": int(0.03 * n),
        "unsafe": int(0.02 * n),
        "ads": int(0.06 * n),
        "patchwork": int(0.01 * n),
        "incoherent": int(0.01 * n),
    }
    n_exact = int(0.015 * n)
    n_near = int(0.015 * n)
    n_passage = 12
    n_footer = min(150, n // 20)
    n_clean = (
        n - sum(counts.values()) - 2 * n_exact - 2 * n_near - n_passage - n_footer
    )
    if n_clean < 10:
        raise ValueError(f"corpus size {n} too small for the planted mix")

    topics = [t for t in TOPIC_POOLS if t != "ads"]
    texts: list[tuple[str, str]] = []
    for _ in range(n_clean):
        texts.append(("clean", make_doc_text(rng, topics[int(rng.integers(0, len(topics)))])))
    for _ in range(counts["cjk"]):
        texts.append(("cjk", make_cjk_text(rng, int(rng.integers(250, 400)))))
    for _ in range(counts["garbled"]):
        texts.append(("garbled", make_garbled_text(rng)))
    for _ in range(counts["boilerplate"]):
        texts.append(("boilerplate", make_boilerplate_text(rng)))
    for _ in range(counts["too_short"]):
        texts.append(("too_short", make_paragraph(rng, TOPIC_POOLS["other"], (1, 2))))
    for _ in range(counts["shuffled"]):
        base = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))])
        texts.append(("shuffled", scramble_sentences(rng, base)))
    for _ in range(counts["unsafe"]):
        texts.append(("unsafe", make_unsafe_text(rng)))
    for _ in range(counts["ads"]):
        texts.append(("ads", make_ad_text(rng)))
    for _ in range(counts["patchwork"]):
        texts.append(("patchwork", make_patchwork_text(rng)))
    for _ in range(counts["incoherent"]):
        texts.append(("incoherent", make_incoherent_text(rng)))
    for _ in range(n_exact):
        base = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))])
        texts.append(("exact_base", base))
        texts.append(("exact_dup", base))
    for _ in range(n_near):
        base = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))], 170, 230)
        dup, j = make_near_duplicate(rng, base)
        texts.append(("near_base", base))
        texts.append((f"near_dup:{j:.6f}", dup))
    truth.passage_text = make_shared_passage(rng)
    for _ in range(n_passage):
        host = make_doc_text(rng, "news", 80, 140)
        paras = host.split("\n\n")
        paras.insert(int(rng.integers(0, len(paras) + 1)), truth.passage_text)
        texts.append(("passage_host", "\n\n".join(paras)))
    truth.footer_text = make_paragraph(rng, TOPIC_POOLS["forum"], (2, 2))
    for _ in range(n_footer):
        body = make_doc_text(rng, topics[int(rng.integers(0, len(topics)))])
        texts.append(("footer_host", body + "\n\n" + truth.footer_text))

    sources = ("common-crawl", "books", "forums")
    src_probs = np.array([0.7, 0.15, 0.15])
    order = rng.permutation(len(texts))
    src_pick = rng.choice(len(sources), size=len(texts), p=src_probs)
    docs: list[Document] = []
    id_of: dict[int, str] = {}
    for new_idx, old_idx in enumerate(order):
        kind, text = texts[old_idx]
        doc_id = f"doc-{new_idx:06d}"
        id_of[int(old_idx)] = doc_id
        docs.append(_doc(doc_id, text, kind.split(":")[0], sources[src_pick[new_idx]]))
        truth.note(kind.split(":")[0], doc_id)
    i = 0
    while i < len(texts):
        kind = texts[i][0]
        if kind == "exact_base":
            truth.exact_pairs.append((id_of[i], id_of[i + 1]))
            i += 2
        elif kind == "near_base":
            j = float(texts[i + 1][0].split(":")[1])
            truth.near_pairs.append((id_of[i], id_of[i + 1], j))
            i += 2
        else:
            if kind == "passage_host":
                truth.passage_ids.append(id_of[i])
            elif kind == "footer_host":
                truth.footer_ids.append(id_of[i])
            i += 1
    return docs, truth


def throughput_docs(total_mb: float, seed: int = 0, words_per_doc: int = 800) -> list[Document]:
    """Large uniform docs for MB/s benchmarks."""
    rng = _rng(seed)
    target = int(total_mb * 1024 * 1024)
    docs: list[Document] = []
    total = 0
    topics = list(TOPIC_POOLS)
    while total < target:
        text = make_doc_text(
            rng, topics[int(rng.integers(0, len(topics)))], words_per_doc, words_per_doc + 200
        )
        doc = _doc(f"bench-{len(docs):06d}", text, "bench")
        docs.append(doc)
        total += len(text.encode("utf-8"))
    return docs

"""Stage-serial, shard-parallel curation runs over JSONL corpora.

A run ingests raw inputs into a fixed number of shards, then applies the
configured stages in order. Each stage reads the previous stage's shard
files and writes its own, so any prefix of the pipeline is a valid
corpus and an interrupted run resumes from the last completed stage.

Determinism contract: shard contents, manifests, and report.json files
are byte-identical for a fixed config regardless of worker count or
resume boundaries. Anything timing-dependent (throughput, seconds) is
quarantined in perf.json files, which carry no document state.
"""
from __future__ import annotations

import json
import os
import shutil
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

import numpy as np

from .clustering import (
    Centroids,
    TfidfModel,
    assign_cluster,
    default_k,
    fit_kmeans,
    fit_tfidf,
    label_clusters,
    parse_override_file,
)
from .coherence import apply_coherence, coherence_report
from .config import PipelineConfig, StageSpec, expand_stages, require_valid
from .corpus_io import (
    MANIFEST_SUFFIX,
    Document,
    StageReport,
    corpus_shard_paths,
    read_jsonl_shard,
    read_wet_corpus,
    write_jsonl_shard,
)
from .dedup import (
    SubstringIndex,
    build_substring_index,
    count_paragraphs,
    exact_key,
    excise_repeated_windows,
    lsh_candidate_pairs,
    minhash_signature,
    resolve_clusters,
    shingle_set,
    strip_repeated_paragraphs,
)
from .errors import (
    AccountingError,
    ConfigError,
    MissingScores,
    MissingTokenizer,
    ParseError,
    StageFailure,
)
from .heuristics import Blocklists, HeuristicConfig, anonymize_pii, heuristic_verdict
from .langid import CharNgramProfile, identify_language
from .ngram_lm import GLOBAL_LANG, NgramLM, PerplexityBuckets, fit_buckets, lm_perplexity
from .segmentation import split_words
from .topics import SamplingPolicy, TopicModel, classify_topic, default_policy, keep_document

COMPLETE_MARKER = "_COMPLETE"
INGEST_DIR = "stage_00_ingest"

# stage defaults that are not owned by a lower-level module
LANGID_MAX_CHARS = 1000
SCORE_MIN = 0.5
MIN_SEGMENT_WORDS = 50
DROP_BUCKET = "tail"
# a language gets its own perplexity calibration only with this much data
MIN_LANG_CALIBRATION = 100


def _wc(text: str) -> int:
    return len(split_words(text))


# --- per-process model cache ------------------------------------------------

_MODEL_CACHE: dict[tuple[str, str], Any] = {}

_LOADERS: dict[str, Callable[[str], Any]] = {
    "langid": CharNgramProfile.load,
    "lm": NgramLM.load,
    "buckets": PerplexityBuckets.load,
    "classifier": None,  # set below; avoids import cycle at class scope
    "topic": TopicModel.load,
    "tfidf": TfidfModel.load,
    "centroids": Centroids.load,
}


def _classifier_load(path: str) -> Any:
    from .classifier import LinearClassifier

    return LinearClassifier.load(path)


_LOADERS["classifier"] = _classifier_load


def _model(kind: str, path: str) -> Any:
    key = (kind, path)
    cached = _MODEL_CACHE.get(key)
    if cached is None:
        cached = _MODEL_CACHE[key] = _LOADERS[kind](path)
    return cached


# --- stage execution context -------------------------------------------------


@dataclass(frozen=True)
class StageContext:
    """Everything a worker process needs to run one stage on one shard."""

    name: str
    params: dict[str, Any]
    models: dict[str, str]
    seed: int


def _make_report(
    name: str,
    docs: list[Document],
    out: list[Document],
    drops: list[str],
    born: int,
) -> StageReport:
    report = StageReport(
        stage_name=name,
        docs_in=len(docs),
        docs_kept=len(out),
        docs_dropped=len(drops),
        docs_born=born,
        tokens_in=sum(_wc(d.text) for d in docs),
        tokens_kept=sum(_wc(d.text) for d in out),
    )
    for reason in drops:
        report.count_drop(reason)
    report.check()
    return report


# --- per-document stage functions --------------------------------------------
# Each takes (ctx, payload, docs) and returns (out_docs, drop_reasons, born).
# They run inside worker processes and must stay free of hidden state beyond
# the read-only model cache.


def _stage_langid(ctx: StageContext, payload: Any, docs: list[Document]):
    profile = _model("langid", ctx.models["langid"])
    keep_langs = set(ctx.params.get("keep_langs") or ["en"])
    min_conf = float(ctx.params.get("min_confidence") or 0.0)
    max_chars = ctx.params.get("max_chars", LANGID_MAX_CHARS)
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        lang, conf = identify_language(doc.text, profile, max_chars=max_chars)
        doc.lang = lang
        doc.meta["langid.confidence"] = conf
        if lang not in keep_langs:
            drops.append(f"langid.{lang}")
        elif conf < min_conf:
            drops.append("langid.low_confidence")
        else:
            out.append(doc)
    return out, drops, 0


def _stage_heuristics(ctx: StageContext, payload: Any, docs: list[Document]):
    cfg, blocklists, anonymize = payload
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        if anonymize:
            new_text, n = anonymize_pii(doc.text)
            if n:
                doc.text = new_text
                doc.meta["heuristics.pii_substitutions"] = n
        verdict = heuristic_verdict(doc, cfg, blocklists)
        if verdict.keep:
            out.append(doc)
        else:
            drops.append(f"heuristics.{verdict.rule_id}")
    return out, drops, 0


def _stage_perplexity(ctx: StageContext, payload: Any, docs: list[Document]):
    mode, buckets_arg, ppl_map = payload
    if mode == "load":
        buckets = _model("buckets", buckets_arg)
    else:
        buckets = PerplexityBuckets(dict(buckets_arg))
    lm = None if ppl_map is not None else _model("lm", ctx.models["lm"])
    drop_bucket = ctx.params.get("drop_bucket") or DROP_BUCKET
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        if ppl_map is not None:
            ppl = ppl_map[doc.id]
        else:
            ppl = lm_perplexity(doc.text, lm)
        bucket = buckets.bucket(ppl, doc.lang or GLOBAL_LANG)
        doc.meta["perplexity.ppl"] = ppl
        doc.meta["perplexity.bucket"] = bucket
        if bucket == drop_bucket:
            drops.append(f"perplexity.{bucket}")
        else:
            out.append(doc)
    return out, drops, 0


def _scored_stage(
    ctx: StageContext,
    docs: list[Document],
    model_key: str,
    meta_key: str,
    drop_reason: str,
):
    clf = _model("classifier", ctx.models[model_key])
    min_score = ctx.params.get("min_score")
    min_score = SCORE_MIN if min_score is None else float(min_score)
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        score = clf.score_text(doc.text)
        doc.meta[meta_key] = score
        if score >= min_score:
            out.append(doc)
        else:
            drops.append(drop_reason)
    return out, drops, 0


def _stage_quality(ctx: StageContext, payload: Any, docs: list[Document]):
    return _scored_stage(ctx, docs, "quality", "quality.score", "quality.low_score")


def _stage_safety(ctx: StageContext, payload: Any, docs: list[Document]):
    return _scored_stage(ctx, docs, "safety", "safety.score", "safety.unsafe")


def _stage_coherence(ctx: StageContext, payload: Any, docs: list[Document]):
    p = ctx.params
    kwargs = {}
    if p.get("keep_mean") is not None:
        kwargs["keep_mean"] = float(p["keep_mean"])
    if p.get("cut_sim") is not None:
        kwargs["cut_sim"] = float(p["cut_sim"])
    if p.get("drop_mean") is not None:
        kwargs["drop_mean"] = float(p["drop_mean"])
    min_words = int(p.get("min_segment_words") or MIN_SEGMENT_WORDS)
    out: list[Document] = []
    drops: list[str] = []
    born = 0
    for doc in docs:
        report = coherence_report(doc.text, **kwargs)
        doc.meta["coherence.mean_sim"] = report.mean_sim
        if report.action == "keep":
            out.append(doc)
            continue
        if report.action == "drop":
            drops.append("coherence.incoherent")
            continue
        pieces = apply_coherence(doc, report)
        born += len(pieces)
        drops.append("coherence.segmented")
        for piece in pieces:
            piece.meta["coherence.parent"] = doc.id
            if _wc(piece.text) < min_words:
                drops.append("coherence.segment_short")
            else:
                out.append(piece)
    return out, drops, born


def _stage_cluster(ctx: StageContext, payload: Any, docs: list[Document]):
    verdicts = payload
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        cid, action = verdicts[doc.id]
        doc.meta["cluster.id"] = cid
        if action == "keep":
            out.append(doc)
        elif action == "override":
            drops.append("cluster.override")
        else:
            drops.append("cluster.low_quality")
    return out, drops, 0


def _stage_dedup_paragraph(ctx: StageContext, payload: Any, docs: list[Document]):
    hot_counts, max_occ = payload
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        doc, removed = strip_repeated_paragraphs(doc, hot_counts, max_occ)
        if removed:
            doc.meta["dedup_paragraph.removed_paragraphs"] = removed
        if removed and _wc(doc.text) == 0:
            drops.append("dedup_paragraph.emptied")
        else:
            out.append(doc)
    return out, drops, 0


def _stage_dedup_minhash(ctx: StageContext, payload: Any, docs: list[Document]):
    drop_ids, cluster_sizes = payload
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        if doc.id in drop_ids:
            drops.append("dedup_minhash.near_duplicate")
            continue
        size = cluster_sizes.get(doc.id)
        if size:
            doc.meta["dedup_minhash.cluster_size"] = size
        out.append(doc)
    return out, drops, 0


def _stage_dedup_exact(ctx: StageContext, payload: Any, docs: list[Document]):
    drop_ids, copy_counts = payload
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        if doc.id in drop_ids:
            drops.append("dedup_exact.duplicate")
            continue
        copies = copy_counts.get(doc.id)
        if copies:
            doc.meta["dedup_exact.copies"] = copies
        out.append(doc)
    return out, drops, 0


def _stage_dedup_substring(ctx: StageContext, payload: Any, docs: list[Document]):
    window, counts, owners, owner_texts = payload
    index = SubstringIndex(
        window=window,
        counts=Counter(counts),
        owners=owners,
        owner_texts=owner_texts,
    )
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        doc, chars = excise_repeated_windows(doc, index)
        if chars:
            doc.meta["dedup_substring.chars_removed"] = chars
        if chars and _wc(doc.text) == 0:
            drops.append("dedup_substring.emptied")
        else:
            out.append(doc)
    return out, drops, 0


def _stage_topic(ctx: StageContext, payload: Any, docs: list[Document]):
    model = _model("topic", ctx.models["topic"])
    for doc in docs:
        label, posterior = classify_topic(doc.text, model)
        doc.meta["topic.label"] = label
        doc.meta["topic.confidence"] = posterior[label]
    return docs, [], 0


def _stage_downsample(ctx: StageContext, payload: Any, docs: list[Document]):
    keep_prob = ctx.params.get("keep_prob")
    if keep_prob is None:
        policy = default_policy(seed=ctx.seed)
    else:
        policy = SamplingPolicy(
            keep_prob={str(k): float(v) for k, v in keep_prob.items()}, seed=ctx.seed
        )
    out: list[Document] = []
    drops: list[str] = []
    for doc in docs:
        label = doc.meta.get("topic.label")
        if keep_document(doc.id, label, policy):
            out.append(doc)
        else:
            drops.append(f"downsample.{label}")
    return out, drops, 0


_STAGE_FNS: dict[str, Callable] = {
    "langid": _stage_langid,
    "heuristics": _stage_heuristics,
    "perplexity": _stage_perplexity,
    "quality": _stage_quality,
    "safety": _stage_safety,
    "coherence": _stage_coherence,
    "cluster": _stage_cluster,
    "dedup_paragraph": _stage_dedup_paragraph,
    "dedup_minhash": _stage_dedup_minhash,
    "dedup_exact": _stage_dedup_exact,
    "dedup_substring": _stage_dedup_substring,
    "topic": _stage_topic,
    "downsample": _stage_downsample,
}


# --- worker task wrappers -----------------------------------------------------


def _read_shard_strict(path: Path) -> list[Document]:
    skips: dict[str, int] = {}
    docs = list(read_jsonl_shard(path, skips))
    if skips:
        raise ParseError(f"{sum(skips.values())} unparseable lines in {path}")
    return docs


def _doc_task(task: tuple) -> dict:
    ctx, payload, in_path, out_path = task
    t0 = time.perf_counter()
    docs = _read_shard_strict(Path(in_path))
    out, drops, born = _STAGE_FNS[ctx.name](ctx, payload, docs)
    report = _make_report(ctx.name, docs, out, drops, born)
    write_jsonl_shard(out, out_path)
    report.seconds = time.perf_counter() - t0
    report.bytes_in = os.path.getsize(in_path)
    return report.to_dict()


def _ppl_task(task: tuple) -> list[tuple[str, str | None, float]]:
    ctx, in_path = task
    lm = _model("lm", ctx.models["lm"])
    return [
        (doc.id, doc.lang, lm_perplexity(doc.text, lm))
        for doc in _read_shard_strict(Path(in_path))
    ]


def _paragraph_counts_task(in_path: str) -> Counter:
    return count_paragraphs(d.text for d in _read_shard_strict(Path(in_path)))


def _signatures_task(in_path: str) -> list[tuple[str, bytes]]:
    sigs: list[tuple[str, bytes]] = []
    for doc in _read_shard_strict(Path(in_path)):
        shingles = shingle_set(doc.text)
        if len(shingles):
            sigs.append((doc.id, minhash_signature(shingles).tobytes()))
    return sigs


def _shingles_task(task: tuple) -> dict[str, bytes]:
    in_path, wanted = task
    wanted = set(wanted)
    out: dict[str, bytes] = {}
    for doc in _read_shard_strict(Path(in_path)):
        if doc.id in wanted:
            out[doc.id] = shingle_set(doc.text).tobytes()
    return out


def _exact_keys_task(in_path: str) -> list[tuple[str, str]]:
    return [(doc.id, exact_key(doc.text)) for doc in _read_shard_strict(Path(in_path))]


_WORKERS: dict[str, Callable] = {
    "doc": _doc_task,
    "ppl": _ppl_task,
    "paragraph_counts": _paragraph_counts_task,
    "signatures": _signatures_task,
    "shingles": _shingles_task,
    "exact_keys": _exact_keys_task,
}


def _guarded(item: tuple) -> tuple:
    fn_name, label, task = item
    try:
        return ("ok", label, _WORKERS[fn_name](task))
    except Exception as exc:  # surfaced as StageFailure by the parent
        return ("error", label, f"{type(exc).__name__}: {exc}")


def _pmap(workers: int, stage: str, fn_name: str, tasks: list, labels: list[str]) -> list:
    """Run tasks over shards; results in task order; first error wins."""
    items = list(zip([fn_name] * len(tasks), labels, tasks))
    if workers <= 1 or len(items) <= 1:
        results = [_guarded(item) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
            results = list(ex.map(_guarded, items))
    out = []
    for status, label, value in results:
        if status == "error":
            raise StageFailure(stage, label, value)
        out.append(value)
    return out


# --- global (cross-shard) stage preparation -----------------------------------
# Each returns the payload handed to every shard worker. Merges are
# commutative (sums and min-claims), so results are independent of the
# order shards were processed in.


def _prepare_heuristics(spec: StageSpec, cfg: PipelineConfig, stage_dir: Path, in_paths, workers):
    p = dict(spec.params)
    anonymize = p.pop("anonymize", True)
    blocklists = Blocklists.from_files(
        url_substrings=p.pop("url_blocklist", None),
        domains=p.pop("domain_blocklist", None),
        words=p.pop("word_blocklist", None),
    )
    kwargs = {k: v for k, v in p.items() if v is not None}
    for key in ("top_ngram_char_frac", "dup_ngram_char_frac"):
        if key in kwargs:
            kwargs[key] = {int(n): float(f) for n, f in kwargs[key].items()}
    return (HeuristicConfig(**kwargs), blocklists, bool(anonymize))


def _fit_run_buckets(scored: list[tuple[str | None, float]]) -> PerplexityBuckets:
    """Global tertiles always; per-language tertiles where data allows."""
    by_lang: dict[str, list[float]] = {GLOBAL_LANG: []}
    for lang, ppl in scored:
        if not np.isfinite(ppl):
            continue
        by_lang[GLOBAL_LANG].append(ppl)
        if lang:
            by_lang.setdefault(lang, []).append(ppl)
    groups = {
        lang: vals
        for lang, vals in by_lang.items()
        if lang == GLOBAL_LANG or len(vals) >= MIN_LANG_CALIBRATION
    }
    return fit_buckets(groups)


def _prepare_perplexity(spec: StageSpec, cfg: PipelineConfig, stage_dir: Path, in_paths, workers):
    ctx = StageContext("perplexity", dict(spec.params), dict(cfg.models), cfg.seed)
    buckets_path = cfg.models.get("buckets")
    if buckets_path:
        return ("load", buckets_path, None)
    # self-calibration: score every document, fit tertiles on this run
    tasks = [(ctx, str(p)) for p in in_paths]
    labels = [p.name for p in in_paths]
    scored: list[tuple[str, str | None, float]] = []
    for part in _pmap(workers, "perplexity", "ppl", tasks, labels):
        scored.extend(part)
    buckets = _fit_run_buckets([(lang, ppl) for _, lang, ppl in scored])
    buckets.save(stage_dir / "buckets.json")
    ppl_map = {doc_id: ppl for doc_id, _, ppl in scored}
    return ("inline", dict(buckets.boundaries), ppl_map)


def _iter_docs(in_paths: list[Path]) -> Iterator[Document]:
    for path in in_paths:
        yield from _read_shard_strict(path)


def _prepare_cluster(spec: StageSpec, cfg: PipelineConfig, stage_dir: Path, in_paths, workers):
    ids: list[str] = []
    texts: list[str] = []
    scores: list[float] = []
    for doc in _iter_docs(in_paths):
        score = doc.meta.get("quality.score")
        if score is None:
            raise MissingScores(f"document {doc.id!r} has no quality score")
        ids.append(doc.id)
        texts.append(doc.text)
        scores.append(float(score))
    if not ids:
        return {}
    p = spec.params
    k = int(p.get("k") or default_k(len(ids)))
    k = min(k, len(ids))
    tfidf = fit_tfidf(texts)
    vectors = tfidf.transform_corpus(texts)
    centroids = fit_kmeans(
        vectors, k, max_iters=int(p.get("max_iters") or 50), seed=cfg.seed
    )
    assignments = [assign_cluster(vectors[i], centroids) for i in range(len(ids))]
    overrides = None
    if p.get("override_file"):
        overrides = parse_override_file(p["override_file"])
    threshold = p.get("min_quality")
    label_map = label_clusters(
        assignments,
        scores,
        k,
        threshold=0.3 if threshold is None else float(threshold),
        overrides=overrides,
    )
    tfidf.save(stage_dir / "tfidf.json")
    centroids.save(stage_dir / "centroids.npz")
    (stage_dir / "cluster_labels.json").write_text(
        json.dumps(label_map.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )
    verdicts: dict[str, tuple[int, str]] = {}
    for doc_id, cid in zip(ids, assignments):
        label = label_map.labels[cid]
        if label.verdict == "keep":
            action = "keep"
        elif label.override == "drop":
            action = "override"
        else:
            action = "drop"
        verdicts[doc_id] = (cid, action)
    return verdicts


def _prepare_dedup_paragraph(spec, cfg, stage_dir, in_paths, workers):
    max_occ = int(spec.params.get("max_occurrences") or 100)
    tasks = [str(p) for p in in_paths]
    labels = [p.name for p in in_paths]
    counts: Counter = Counter()
    for part in _pmap(workers, "dedup_paragraph", "paragraph_counts", tasks, labels):
        counts.update(part)
    hot = {key: n for key, n in counts.items() if n > max_occ}
    return (hot, max_occ)


def _prepare_dedup_minhash(spec, cfg, stage_dir, in_paths, workers):
    tasks = [str(p) for p in in_paths]
    labels = [p.name for p in in_paths]
    sigs: list[tuple[str, np.ndarray]] = []
    for part in _pmap(workers, "dedup_minhash", "signatures", tasks, labels):
        for doc_id, blob in part:
            sigs.append((doc_id, np.frombuffer(blob, dtype=np.uint64)))
    pairs, _ = lsh_candidate_pairs(sigs)
    candidates = {doc_id for pair in pairs for doc_id in pair}
    shingles: dict[str, np.ndarray] = {}
    if candidates:
        shingle_tasks = [(str(p), tuple(sorted(candidates))) for p in in_paths]
        for part in _pmap(workers, "dedup_minhash", "shingles", shingle_tasks, labels):
            for doc_id, blob in part.items():
                shingles[doc_id] = np.frombuffer(blob, dtype=np.uint64)
    cutoff = spec.params.get("verify_jaccard")
    clusters = resolve_clusters(
        pairs, shingles, cutoff=0.7 if cutoff is None else float(cutoff)
    )
    drop_ids: set[str] = set()
    cluster_sizes: dict[str, int] = {}
    for cluster in clusters:
        cluster_sizes[cluster.retained] = len(cluster.members)
        drop_ids.update(m for m in cluster.members if m != cluster.retained)
    return (frozenset(drop_ids), cluster_sizes)


def _prepare_dedup_exact(spec, cfg, stage_dir, in_paths, workers):
    tasks = [str(p) for p in in_paths]
    labels = [p.name for p in in_paths]
    best: dict[str, str] = {}
    key_counts: Counter = Counter()
    all_pairs: list[tuple[str, str]] = []
    for part in _pmap(workers, "dedup_exact", "exact_keys", tasks, labels):
        all_pairs.extend(part)
    for doc_id, key in all_pairs:
        key_counts[key] += 1
        cur = best.get(key)
        if cur is None or doc_id < cur:
            best[key] = doc_id
    drop_ids: set[str] = set()
    copy_counts: dict[str, int] = {}
    for doc_id, key in all_pairs:
        if doc_id != best[key]:
            drop_ids.add(doc_id)
        elif key_counts[key] > 1:
            copy_counts[doc_id] = key_counts[key]
    return (frozenset(drop_ids), copy_counts)


def _prepare_dedup_substring(spec, cfg, stage_dir, in_paths, workers):
    window = int(spec.params.get("window") or 50)
    index = build_substring_index(
        ((doc.id, doc.text) for doc in _iter_docs(in_paths)), window
    )
    hot = {key: n for key, n in index.counts.items() if n > 1}
    return (window, hot, index.owners, index.owner_texts)


_PREPARE_FNS: dict[str, Callable] = {
    "heuristics": _prepare_heuristics,
    "perplexity": _prepare_perplexity,
    "cluster": _prepare_cluster,
    "dedup_paragraph": _prepare_dedup_paragraph,
    "dedup_minhash": _prepare_dedup_minhash,
    "dedup_exact": _prepare_dedup_exact,
    "dedup_substring": _prepare_dedup_substring,
}


# --- ingest --------------------------------------------------------------------


def _input_files(inputs: Iterable[str]) -> list[Path]:
    files: list[Path] = []
    for raw in inputs:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("*.jsonl")))
            files.extend(sorted(path.glob("*.wet")))
        elif path.suffix in (".jsonl", ".wet"):
            files.append(path)
        else:
            raise ConfigError([f"unsupported input file type: {path}"])
    return files


def ingest_corpus(inputs: Iterable[str], out_dir: str | Path, shards: int) -> StageReport:
    """Normalize raw inputs into round-robin JSONL shards.

    Document i (in deterministic input-file order) lands in shard
    i % shards, so shard contents depend only on the inputs. Records
    that fail to parse and repeated ids are counted and skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = StageReport(stage_name="ingest")
    buckets: list[list[Document]] = [[] for _ in range(shards)]
    seen: set[str] = set()
    kept = 0
    for path in _input_files(inputs):
        skips: dict[str, int] = {}
        if path.suffix == ".wet":
            docs: Iterator[Document] = read_wet_corpus(path, skips)
        else:
            docs = read_jsonl_shard(path, skips)
        for doc in docs:
            report.docs_in += 1
            report.tokens_in += _wc(doc.text)
            if doc.id in seen:
                report.docs_dropped += 1
                report.count_drop("ingest.duplicate_id")
                continue
            seen.add(doc.id)
            buckets[kept % shards].append(doc)
            kept += 1
        for reason, n in skips.items():
            report.docs_in += n
            report.docs_dropped += n
            report.count_drop(f"ingest.{reason}", n)
    for i, bucket in enumerate(buckets):
        write_jsonl_shard(bucket, out_dir / f"shard-{i:04d}.jsonl")
        report.docs_kept += len(bucket)
        report.tokens_kept += sum(_wc(d.text) for d in bucket)
    report.check()
    return report


# --- run orchestration -----------------------------------------------------------


@dataclass
class RunResult:
    output_dir: Path
    final_dir: Path
    ingest: StageReport
    stages: list[StageReport] = field(default_factory=list)
    stopped_after: str | None = None

    @property
    def docs_out(self) -> int:
        return self.stages[-1].docs_kept if self.stages else self.ingest.docs_kept


def _write_stage_outputs(stage_dir: Path, report: StageReport) -> None:
    rec = report.to_dict()
    seconds = rec.pop("seconds")
    (stage_dir / "report.json").write_text(
        json.dumps(rec, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    mb = report.bytes_in / 1e6
    perf = {
        "stage": report.stage_name,
        "seconds": round(seconds, 6),
        "docs_per_second": round(report.docs_in / seconds, 3) if seconds else None,
        "mb_per_second": round(mb / seconds, 3) if seconds else None,
    }
    (stage_dir / "perf.json").write_text(
        json.dumps(perf, sort_keys=True) + "\n", encoding="utf-8"
    )
    (stage_dir / COMPLETE_MARKER).write_text("", encoding="utf-8")


def _load_stage_report(stage_dir: Path) -> StageReport:
    rec = json.loads((stage_dir / "report.json").read_text(encoding="utf-8"))
    rec.setdefault("seconds", 0.0)
    return StageReport.from_dict(rec)


def _run_stage(
    spec: StageSpec,
    cfg: PipelineConfig,
    in_dir: Path,
    stage_dir: Path,
    workers: int,
) -> StageReport:
    stage_dir.mkdir(parents=True, exist_ok=True)
    in_paths = corpus_shard_paths(in_dir)
    t0 = time.perf_counter()
    prepare = _PREPARE_FNS.get(spec.name)
    if prepare is None:
        payload = None
    else:
        try:
            payload = prepare(spec, cfg, stage_dir, in_paths, workers)
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure(spec.name, "<global phase>", f"{type(exc).__name__}: {exc}")
    ctx = StageContext(spec.name, dict(spec.params), dict(cfg.models), cfg.seed)
    tasks = [(ctx, payload, str(p), str(stage_dir / p.name)) for p in in_paths]
    labels = [p.name for p in in_paths]
    merged = StageReport(stage_name=spec.name)
    for rec in _pmap(workers, spec.name, "doc", tasks, labels):
        merged.merge(StageReport.from_dict(rec))
    merged.check()
    merged.seconds = time.perf_counter() - t0
    _write_stage_outputs(stage_dir, merged)
    return merged


def check_conservation(ingest: StageReport, stages: list[StageReport]) -> None:
    """Every document must be accounted for: kept, dropped, or born.

    Raises AccountingError when counts fail to chain between stages or
    the run-level balance (docs in + born == dropped + docs out) breaks.
    """
    reports = [ingest] + stages
    for left, right in zip(reports, reports[1:]):
        if right.docs_in != left.docs_kept:
            raise AccountingError(
                f"stage {right.stage_name!r} read {right.docs_in} docs but "
                f"{left.stage_name!r} kept {left.docs_kept}"
            )
    for report in reports:
        try:
            report.check()
        except ValueError as exc:
            raise AccountingError(str(exc)) from exc
    if stages:
        docs_in = stages[0].docs_in
        born = sum(r.docs_born for r in stages)
        dropped = sum(r.docs_dropped for r in stages)
        docs_out = stages[-1].docs_kept
        if docs_in + born != dropped + docs_out:
            raise AccountingError(
                f"run does not balance: {docs_in} in + {born} born != "
                f"{dropped} dropped + {docs_out} out"
            )


def render_run_text(ingest: StageReport, stages: list[StageReport]) -> str:
    lines = ["corpus curation run", ""]
    lines.append(
        f"ingest: {ingest.docs_in} records -> {ingest.docs_kept} docs "
        f"({ingest.docs_dropped} skipped)"
    )
    lines.append("")
    lines.append(f"{'stage':<18}{'in':>9}{'born':>7}{'kept':>9}{'dropped':>9}  top reasons")
    for report in stages:
        top = sorted(report.drop_reasons.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
        reasons = ", ".join(f"{reason} {n}" for reason, n in top) or "-"
        lines.append(
            f"{report.stage_name:<18}{report.docs_in:>9}{report.docs_born:>7}"
            f"{report.docs_kept:>9}{report.docs_dropped:>9}  {reasons}"
        )
    if stages:
        final = stages[-1]
        start = stages[0].docs_in or 1
        lines.append("")
        lines.append(
            f"final: {final.docs_kept} docs, {final.tokens_kept} tokens "
            f"({100.0 * final.docs_kept / start:.1f}% of ingested docs retained)"
        )
    return "\n".join(lines) + "\n"


def _write_run_report(out_dir: Path, ingest: StageReport, stages: list[StageReport]) -> Path:
    def strip_seconds(report: StageReport) -> dict:
        rec = report.to_dict()
        rec.pop("seconds")
        return rec

    rec = {
        "ingest": strip_seconds(ingest),
        "stages": [strip_seconds(r) for r in stages],
        "docs_out": stages[-1].docs_kept if stages else ingest.docs_kept,
    }
    path = out_dir / "report.json"
    path.write_text(json.dumps(rec, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(render_run_text(ingest, stages), encoding="utf-8")
    return path


def _stage_dirs(out_dir: Path, stages: list[StageSpec]) -> list[Path]:
    return [
        out_dir / f"stage_{idx:02d}_{spec.name}" for idx, spec in enumerate(stages, start=1)
    ]


def _clear_stale(out_dir: Path, expected: set[str]) -> None:
    for path in out_dir.glob("stage_*"):
        if path.is_dir() and path.name not in expected:
            shutil.rmtree(path)


def run_pipeline(
    cfg: PipelineConfig,
    resume: bool = False,
    stop_after: str | None = None,
) -> RunResult:
    """Execute (or resume) a full curation run.

    A fresh run clears any stage directories under output_dir first; a
    resumed run trusts directories holding a _COMPLETE marker and redoes
    everything else. stop_after finishes the named stage and returns,
    which is also how an interrupted run is simulated in tests.
    """
    require_valid(cfg)
    stages = expand_stages(cfg.stages)
    if stop_after == "dedup":
        stop_after = "dedup_substring"
    if stop_after is not None and stop_after != "ingest":
        if stop_after not in [s.name for s in stages]:
            raise ConfigError([f"stop_after names unknown stage {stop_after!r}"])
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dirs = _stage_dirs(out_dir, stages)
    expected = {d.name for d in dirs} | {INGEST_DIR}
    _clear_stale(out_dir, expected)
    if not resume:
        for path in dirs + [out_dir / INGEST_DIR]:
            if path.exists():
                shutil.rmtree(path)

    ingest_dir = out_dir / INGEST_DIR
    if resume and (ingest_dir / COMPLETE_MARKER).exists():
        ingest_report = _load_stage_report(ingest_dir)
    else:
        if ingest_dir.exists():
            shutil.rmtree(ingest_dir)
        t0 = time.perf_counter()
        ingest_report = ingest_corpus(cfg.inputs, ingest_dir, cfg.shards)
        ingest_report.seconds = time.perf_counter() - t0
        _write_stage_outputs(ingest_dir, ingest_report)
    result = RunResult(output_dir=out_dir, final_dir=ingest_dir, ingest=ingest_report)
    if stop_after == "ingest":
        result.stopped_after = "ingest"
        return result

    prev_dir = ingest_dir
    for spec, stage_dir in zip(stages, dirs):
        if resume and (stage_dir / COMPLETE_MARKER).exists():
            report = _load_stage_report(stage_dir)
        else:
            if stage_dir.exists():
                shutil.rmtree(stage_dir)
            report = _run_stage(spec, cfg, prev_dir, stage_dir, cfg.workers)
        result.stages.append(report)
        result.final_dir = stage_dir
        prev_dir = stage_dir
        if stop_after == spec.name:
            result.stopped_after = spec.name
            return result

    check_conservation(ingest_report, result.stages)
    _write_run_report(out_dir, ingest_report, result.stages)
    return result


def run_single_stage(
    spec: StageSpec,
    in_dir: str | Path,
    out_dir: str | Path,
    models: dict[str, str] | None = None,
    seed: int = 0,
    workers: int = 1,
) -> StageReport:
    """Apply one stage to an existing sharded corpus, outside a full run.

    Unlike run_pipeline this skips config validation, so it can e.g.
    down-sample a corpus whose topic labels were written by an earlier
    run. The output directory is replaced wholesale.
    """
    cfg = PipelineConfig(
        inputs=[str(in_dir)],
        output_dir=str(out_dir),
        workers=workers,
        seed=seed,
        models=dict(models or {}),
    )
    out_path = Path(out_dir)
    if out_path.exists():
        shutil.rmtree(out_path)
    return _run_stage(spec, cfg, Path(in_dir), out_path, workers)


# --- corpus mixture reporting ------------------------------------------------------


@dataclass
class MixtureReport:
    """Composition of a corpus by source, language, and topic label."""

    token_unit: str
    total_docs: int = 0
    total_tokens: int = 0
    by_source: dict[str, list[int]] = field(default_factory=dict)
    by_lang: dict[str, list[int]] = field(default_factory=dict)
    by_topic: dict[str, list[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "token_unit": self.token_unit,
            "total_docs": self.total_docs,
            "total_tokens": self.total_tokens,
            "by_source": {k: list(v) for k, v in sorted(self.by_source.items())},
            "by_lang": {k: list(v) for k, v in sorted(self.by_lang.items())},
            "by_topic": {k: list(v) for k, v in sorted(self.by_topic.items())},
        }

    def render_text(self) -> str:
        lines = [
            f"corpus mixture ({self.total_docs} docs, "
            f"{self.total_tokens} {self.token_unit} tokens)",
        ]
        for title, table in (
            ("source", self.by_source),
            ("language", self.by_lang),
            ("topic", self.by_topic),
        ):
            lines.append("")
            lines.append(f"by {title}:")
            total = self.total_tokens or 1
            for key, (docs, tokens) in sorted(
                table.items(), key=lambda kv: (-kv[1][1], kv[0])
            ):
                lines.append(
                    f"  {key:<16}{docs:>9} docs{tokens:>12} tokens"
                    f"{100.0 * tokens / total:>7.1f}%"
                )
        return "\n".join(lines) + "\n"


def report_mixture(
    docs: Iterable[Document],
    token_unit: str = "word",
    tokenizer: Any = None,
) -> MixtureReport:
    """Tally docs/tokens by source, language, and topic label.

    token_unit "word" uses the whitespace/CJK word rule; "bpe" encodes
    with the supplied tokenizer and raises MissingTokenizer without one.
    """
    if token_unit not in ("word", "bpe"):
        raise ValueError(f"unknown token unit {token_unit!r}")
    if token_unit == "bpe" and tokenizer is None:
        raise MissingTokenizer("token_unit 'bpe' requires a tokenizer")
    mix = MixtureReport(token_unit=token_unit)
    for doc in docs:
        tokens = len(tokenizer.encode(doc.text)) if token_unit == "bpe" else _wc(doc.text)
        mix.total_docs += 1
        mix.total_tokens += tokens
        for table, key in (
            (mix.by_source, doc.source or "unknown"),
            (mix.by_lang, doc.lang or "und"),
            (mix.by_topic, doc.meta.get("topic.label", "unlabeled")),
        ):
            row = table.setdefault(key, [0, 0])
            row[0] += 1
            row[1] += tokens
    return mix

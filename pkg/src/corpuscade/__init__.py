"""Shard-parallel corpus curation for language-model pretraining data.

The package covers the full path from raw web-archive text to training
batches: cascaded filtering (language, rules, perplexity, learned
scorers, coherence, cluster verdicts), four-pass deduplication, topic
tagging and down-sampling, BPE tokenization, sequence packing, and
long-context retrieval evaluation sets.
"""
from .classifier import LinearClassifier, TrainConfig, train_classifier
from .clustering import (
    Centroids,
    ClusterLabelMap,
    TfidfModel,
    assign_cluster,
    default_k,
    fit_kmeans,
    fit_tfidf,
    label_clusters,
)
from .coherence import CoherenceReport, apply_coherence, coherence_report
from .config import (
    PipelineConfig,
    StageSpec,
    default_stages,
    expand_stages,
    load_config,
    require_valid,
    validate_config,
)
from .corpus_io import (
    Document,
    ShardManifest,
    StageReport,
    corpus_shard_paths,
    dedup_normalize,
    read_corpus_dir,
    read_jsonl_shard,
    read_wet_corpus,
    write_jsonl_shard,
)
from .dedup import (
    LshIndex,
    build_substring_index,
    count_paragraphs,
    exact_jaccard,
    exact_retained_ids,
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
    CorpusError,
    EmptyShingles,
    MissingTokenizer,
    StageFailure,
)
from .features import HashedFeatureVector, clipped_cosine, featurize
from .haystack import HaystackInstance, haystack_grid, make_haystack, write_haystack_manifest
from .heuristics import Blocklists, HeuristicConfig, anonymize_pii, heuristic_verdict
from .langid import CharNgramProfile, identify_language, train_langid
from .ngram_lm import NgramLM, PerplexityBuckets, fit_buckets, lm_perplexity, train_ngram_lm
from .packing import (
    PackedSequence,
    UpsampleWeights,
    length_upsample,
    pack_sequences,
    read_packed_corpus,
    read_token_corpus,
    write_packed_corpus,
    write_token_corpus,
)
from .pipeline import (
    MixtureReport,
    RunResult,
    check_conservation,
    ingest_corpus,
    report_mixture,
    run_pipeline,
)
from .repstats import RepetitionStats, repetition_stats
from .tokenizer import Tokenizer, TokenizerConfig, pretokenize, train_bpe
from .topics import SamplingPolicy, TopicModel, classify_topic, keep_document, train_topic

__version__ = "0.1.0"

__all__ = [
    "AccountingError",
    "Blocklists",
    "Centroids",
    "CharNgramProfile",
    "ClusterLabelMap",
    "CoherenceReport",
    "ConfigError",
    "CorpusError",
    "Document",
    "EmptyShingles",
    "HashedFeatureVector",
    "HaystackInstance",
    "HeuristicConfig",
    "LinearClassifier",
    "LshIndex",
    "MissingTokenizer",
    "MixtureReport",
    "NgramLM",
    "PackedSequence",
    "PerplexityBuckets",
    "PipelineConfig",
    "RepetitionStats",
    "RunResult",
    "SamplingPolicy",
    "ShardManifest",
    "StageFailure",
    "StageReport",
    "StageSpec",
    "TfidfModel",
    "Tokenizer",
    "TokenizerConfig",
    "TopicModel",
    "TrainConfig",
    "UpsampleWeights",
    "anonymize_pii",
    "apply_coherence",
    "assign_cluster",
    "build_substring_index",
    "check_conservation",
    "classify_topic",
    "clipped_cosine",
    "coherence_report",
    "corpus_shard_paths",
    "count_paragraphs",
    "dedup_normalize",
    "default_k",
    "default_stages",
    "exact_jaccard",
    "exact_retained_ids",
    "excise_repeated_windows",
    "expand_stages",
    "featurize",
    "fit_buckets",
    "fit_kmeans",
    "fit_tfidf",
    "haystack_grid",
    "heuristic_verdict",
    "identify_language",
    "ingest_corpus",
    "keep_document",
    "label_clusters",
    "length_upsample",
    "lm_perplexity",
    "load_config",
    "lsh_candidate_pairs",
    "make_haystack",
    "minhash_signature",
    "pack_sequences",
    "pretokenize",
    "read_corpus_dir",
    "read_jsonl_shard",
    "read_packed_corpus",
    "read_token_corpus",
    "read_wet_corpus",
    "repetition_stats",
    "report_mixture",
    "require_valid",
    "resolve_clusters",
    "run_pipeline",
    "shingle_set",
    "strip_repeated_paragraphs",
    "train_bpe",
    "train_classifier",
    "train_langid",
    "train_ngram_lm",
    "train_topic",
    "validate_config",
    "write_haystack_manifest",
    "write_jsonl_shard",
    "write_packed_corpus",
    "write_token_corpus",
]

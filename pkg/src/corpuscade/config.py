"""Declarative pipeline configuration: schema, loading, validation.

A run is described by one YAML file: input paths, output directory,
shard/worker counts, a global seed, model file paths, and an ordered
stage list. Environment variables (CORPUSCADE_MODEL_<NAME>,
CORPUSCADE_OUTPUT_DIR) may override paths only, never thresholds, so a
config file alone always pins the filtering policy.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

# stages that only annotate or drop single docs; listed for reference in
# validation messages
STAGE_NAMES = (
    "langid",
    "heuristics",
    "perplexity",
    "quality",
    "safety",
    "coherence",
    "cluster",
    "dedup",
    "dedup_paragraph",
    "dedup_minhash",
    "dedup_exact",
    "dedup_substring",
    "topic",
    "downsample",
)

DEDUP_CASCADE = ("dedup_paragraph", "dedup_minhash", "dedup_exact", "dedup_substring")

MODEL_KEYS = (
    "langid",
    "lm",
    "buckets",
    "quality",
    "safety",
    "tfidf",
    "centroids",
    "topic",
    "tokenizer",
)

# model files a stage cannot run without; buckets and cluster models are
# optional because those stages can calibrate/fit on the run itself
_STAGE_REQUIRED_MODELS = {
    "langid": ("langid",),
    "perplexity": ("lm",),
    "quality": ("quality",),
    "safety": ("safety",),
    "topic": ("topic",),
}

_FILTERING_STAGES = frozenset(
    {"langid", "heuristics", "perplexity", "quality", "safety", "coherence", "cluster"}
)

_BOOL = (bool,)
_INT = (int,)
_NUM = (int, float)
_STR = (str,)
_LIST = (list,)

# params accepted per stage with their expected types; None is allowed
# anywhere a path or optional override is expected
_STAGE_PARAMS: dict[str, dict[str, tuple[type, ...]]] = {
    "langid": {"keep_langs": _LIST, "min_confidence": _NUM, "max_chars": _INT},
    "heuristics": {
        "min_words": _INT,
        "max_words": _INT,
        "max_symbol_word_ratio": _NUM,
        "max_ellipsis_line_frac": _NUM,
        "max_short_line_frac": _NUM,
        "short_line_max_words": _INT,
        "max_incomplete_line_frac": _NUM,
        "min_alpha_word_frac": _NUM,
        "dup_line_frac": _NUM,
        "dup_para_frac": _NUM,
        "dup_line_char_frac": _NUM,
        "dup_para_char_frac": _NUM,
        "top_ngram_char_frac": (dict,),
        "dup_ngram_char_frac": (dict,),
        "anonymize": _BOOL,
        "url_blocklist": _STR,
        "domain_blocklist": _STR,
        "word_blocklist": _STR,
    },
    "perplexity": {"drop_bucket": _STR},
    "quality": {"min_score": _NUM},
    "safety": {"min_score": _NUM},
    "coherence": {
        "keep_mean": _NUM,
        "cut_sim": _NUM,
        "drop_mean": _NUM,
        "min_segment_words": _INT,
    },
    "cluster": {"k": _INT, "min_quality": _NUM, "override_file": _STR, "max_iters": _INT},
    "dedup": {},
    "dedup_paragraph": {"max_occurrences": _INT},
    "dedup_minhash": {"verify_jaccard": _NUM},
    "dedup_exact": {},
    "dedup_substring": {"window": _INT},
    "topic": {},
    "downsample": {"keep_prob": (dict,)},
}

_FRACTION_PARAMS = frozenset(
    {
        "min_confidence",
        "max_symbol_word_ratio",
        "max_ellipsis_line_frac",
        "max_short_line_frac",
        "max_incomplete_line_frac",
        "min_alpha_word_frac",
        "dup_line_frac",
        "dup_para_frac",
        "dup_line_char_frac",
        "dup_para_char_frac",
        "min_score",
        "min_quality",
        "keep_mean",
        "cut_sim",
        "drop_mean",
        "verify_jaccard",
    }
)


@dataclass(frozen=True)
class StageSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class PipelineConfig:
    inputs: list[str]
    output_dir: str
    shards: int = 8
    workers: int = 1
    seed: int = 0
    models: dict[str, str] = field(default_factory=dict)
    stages: list[StageSpec] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "inputs": list(self.inputs),
            "output_dir": self.output_dir,
            "shards": self.shards,
            "workers": self.workers,
            "seed": self.seed,
            "models": dict(self.models),
            "stages": [{"name": s.name, "params": dict(s.params)} for s in self.stages],
        }

    @classmethod
    def from_dict(cls, rec: dict[str, Any]) -> "PipelineConfig":
        inputs = rec.get("inputs") or rec.get("input") or []
        if isinstance(inputs, str):
            inputs = [inputs]
        stages: list[StageSpec] = []
        for item in rec.get("stages") or []:
            if isinstance(item, str):
                stages.append(StageSpec(item))
            elif isinstance(item, dict):
                name = item.get("name", "")
                if "params" in item:
                    params = item.get("params") or {}
                else:
                    params = {k: v for k, v in item.items() if k != "name"}
                stages.append(StageSpec(str(name), dict(params)))
            else:
                stages.append(StageSpec(repr(item)))
        return cls(
            inputs=[str(p) for p in inputs],
            output_dir=str(rec.get("output_dir", "")),
            shards=rec.get("shards", 8),
            workers=rec.get("workers", 1),
            seed=rec.get("seed", 0),
            models={str(k): str(v) for k, v in (rec.get("models") or {}).items()},
            stages=stages,
        )


def default_stages() -> list[StageSpec]:
    """The standard cascade: rule filters, learned scorers, cluster
    filter, dedup passes, then topic-aware down-sampling."""
    return [
        StageSpec("langid", {"keep_langs": ["en"]}),
        StageSpec("heuristics", {}),
        StageSpec("perplexity", {}),
        StageSpec("quality", {}),
        StageSpec("safety", {}),
        StageSpec("coherence", {}),
        StageSpec("cluster", {}),
        StageSpec("dedup", {}),
        StageSpec("topic", {}),
        StageSpec("downsample", {}),
    ]


def _apply_env_overrides(cfg: PipelineConfig) -> None:
    out = os.environ.get("CORPUSCADE_OUTPUT_DIR")
    if out:
        cfg.output_dir = out
    for key in MODEL_KEYS:
        val = os.environ.get(f"CORPUSCADE_MODEL_{key.upper()}")
        if val:
            cfg.models[key] = val


def load_config(path: str | Path, apply_env: bool = True) -> PipelineConfig:
    try:
        rec = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"config is not valid YAML: {exc}"]) from exc
    if not isinstance(rec, dict):
        raise ConfigError(["config root must be a mapping"])
    cfg = PipelineConfig.from_dict(rec)
    if apply_env:
        _apply_env_overrides(cfg)
    return cfg


def expand_stages(stages: list[StageSpec]) -> list[StageSpec]:
    """Replace the "dedup" alias with the four-pass cascade."""
    out: list[StageSpec] = []
    for spec in stages:
        if spec.name == "dedup":
            for name in DEDUP_CASCADE:
                out.append(StageSpec(name, dict(spec.params)))
        else:
            out.append(spec)
    return out


def validate_config(cfg: PipelineConfig) -> tuple[list[str], list[str]]:
    """(errors, warnings); never partial execution on errors."""
    errors: list[str] = []
    warnings: list[str] = []

    if not cfg.inputs:
        errors.append("no input paths given")
    for p in cfg.inputs:
        if not Path(p).exists():
            errors.append(f"input path does not exist: {p}")
    if not cfg.output_dir:
        errors.append("output_dir is required")
    if not isinstance(cfg.shards, int) or cfg.shards < 1:
        errors.append(f"shards must be a positive integer, got {cfg.shards!r}")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        errors.append(f"workers must be a positive integer, got {cfg.workers!r}")
    if not isinstance(cfg.seed, int):
        errors.append(f"seed must be an integer, got {cfg.seed!r}")

    expanded = expand_stages(cfg.stages)
    seen: set[str] = set()
    for spec in expanded:
        if spec.name not in STAGE_NAMES or spec.name == "dedup":
            errors.append(f"unknown stage {spec.name!r}")
            continue
        if spec.name in seen:
            errors.append(f"duplicate stage {spec.name!r}; stage names must be unique")
        seen.add(spec.name)
        allowed = _STAGE_PARAMS[spec.name]
        for key, val in spec.params.items():
            if key not in allowed:
                errors.append(f"stage {spec.name!r}: unknown parameter {key!r}")
                continue
            if val is None:
                continue
            if not isinstance(val, allowed[key]) or isinstance(val, bool) and allowed[key] != _BOOL:
                errors.append(
                    f"stage {spec.name!r}: parameter {key!r} expects "
                    f"{'/'.join(t.__name__ for t in allowed[key])}, got {type(val).__name__}"
                )
                continue
            if key in _FRACTION_PARAMS and not 0.0 <= float(val) <= 1.0:
                errors.append(f"stage {spec.name!r}: parameter {key!r} must be in [0, 1]")
        for model_key in _STAGE_REQUIRED_MODELS.get(spec.name, ()):
            path = cfg.models.get(model_key)
            if not path:
                errors.append(f"stage {spec.name!r} requires models.{model_key}")
            elif not Path(path).exists():
                errors.append(f"models.{model_key} does not exist: {path}")
        if spec.name == "downsample" and "topic" not in seen:
            errors.append("downsample requires a topic stage earlier in the pipeline")
        if spec.name == "cluster" and "quality" not in seen:
            warnings.append(
                "cluster stage runs before any quality stage; cluster labeling "
                "will fail unless docs already carry quality scores"
            )
    for key in cfg.models:
        if key not in MODEL_KEYS:
            errors.append(f"unknown model key {key!r}")
    first_dedup = next((i for i, s in enumerate(expanded) if s.name.startswith("dedup")), None)
    first_filter = next((i for i, s in enumerate(expanded) if s.name in _FILTERING_STAGES), None)
    if first_dedup is not None and (first_filter is None or first_dedup < first_filter):
        warnings.append("dedup runs before any filter stage; order is allowed but unusual")
    return errors, warnings


def require_valid(cfg: PipelineConfig) -> list[str]:
    """Raise ConfigError on any validation error; return warnings."""
    errors, warnings = validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    return warnings

"""Command-line entry points.

Corpus-level commands operate on sharded JSONL directories; the
line-oriented modes (filter --verdicts, dedup --signatures, tokenize
--encode/--decode) speak JSONL on stdin/stdout so other processes can
drive single documents through the same code paths the pipeline uses.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import StageSpec, load_config
from .corpus_io import Document, read_corpus_dir
from .dedup import minhash_signature, shingle_set
from .errors import CorpusError, EmptyShingles
from .haystack import DESK_DEPTHS, DESK_LENGTHS, haystack_grid, write_haystack_manifest
from .heuristics import Blocklists, HeuristicConfig, heuristic_verdict
from .packing import (
    UpsampleWeights,
    length_upsample,
    pack_sequences,
    read_token_corpus,
    write_packed_corpus,
    write_token_corpus,
)
from .pipeline import (
    PipelineConfig,
    ingest_corpus,
    render_run_text,
    report_mixture,
    run_pipeline,
    run_single_stage,
)
from .tokenizer import Tokenizer, TokenizerConfig, train_bpe

_DEFAULT_NEEDLE = (
    "The best thing to do in San Francisco is eat a sandwich and "
    "sit in Dolores Park on a sunny day."
)
_DEFAULT_QUESTION = "What is the best thing to do in San Francisco?"
_DEFAULT_ANSWER = "eat a sandwich and sit in Dolores Park on a sunny day"


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


def _stdin_lines():
    for line in sys.stdin:
        line = line.strip()
        if line:
            yield line


def _emit(rec: dict) -> None:
    sys.stdout.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


@click.group()
def main() -> None:
    """Corpus curation, tokenization, and packing for pretraining data."""


@main.command()
@click.option("--config", "-c", "config_path", required=True, type=click.Path(exists=True))
@click.option("--workers", type=int, default=None, help="Override worker count.")
@click.option("--shards", type=int, default=None, help="Override shard count.")
@click.option("--seed", type=int, default=None, help="Override run seed.")
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--resume", is_flag=True, help="Trust completed stages in the run dir.")
@click.option("--stop-after", default=None, help="Finish the named stage and exit.")
def run(config_path, workers, shards, seed, output_dir, resume, stop_after):
    """Execute the configured pipeline end to end."""
    try:
        cfg = load_config(config_path)
        if workers is not None:
            cfg.workers = workers
        if shards is not None:
            cfg.shards = shards
        if seed is not None:
            cfg.seed = seed
        if output_dir is not None:
            cfg.output_dir = output_dir
        result = run_pipeline(cfg, resume=resume, stop_after=stop_after)
    except CorpusError as exc:
        _fail(exc)
    if result.stopped_after:
        click.echo(f"stopped after stage {result.stopped_after!r}; resume with --resume")
    click.echo(render_run_text(result.ingest, result.stages), nl=False)
    click.echo(f"final corpus: {result.final_dir}")


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output-dir", "-o", required=True, type=click.Path())
@click.option("--shards", type=int, default=8, show_default=True)
def ingest(inputs, output_dir, shards):
    """Normalize JSONL/WET inputs into round-robin shards."""
    try:
        report = ingest_corpus(inputs, output_dir, shards)
    except CorpusError as exc:
        _fail(exc)
    click.echo(
        f"ingested {report.docs_kept} docs into {shards} shards "
        f"({report.docs_dropped} records skipped)"
    )


def _parse_doc_or_emit_error(line: str) -> Document | None:
    try:
        return Document.from_json(line)
    except CorpusError as exc:
        _emit({"error": f"{type(exc).__name__}: {exc}", "id": None})
        return None


@main.command("filter")
@click.option("--input", "in_dir", type=click.Path(exists=True), default=None)
@click.option("--output", "out_dir", type=click.Path(), default=None)
@click.option("--verdicts", is_flag=True, help="JSONL docs on stdin -> verdicts on stdout.")
@click.option("--min-words", type=int, default=None)
@click.option("--max-words", type=int, default=None)
@click.option("--url-blocklist", type=click.Path(exists=True), default=None)
@click.option("--domain-blocklist", type=click.Path(exists=True), default=None)
@click.option("--word-blocklist", type=click.Path(exists=True), default=None)
@click.option("--workers", type=int, default=1)
def filter_cmd(in_dir, out_dir, verdicts, min_words, max_words, url_blocklist,
               domain_blocklist, word_blocklist, workers):
    """Apply the structural/repetition rule filters."""
    if verdicts:
        kwargs = {}
        if min_words is not None:
            kwargs["min_words"] = min_words
        if max_words is not None:
            kwargs["max_words"] = max_words
        cfg = HeuristicConfig(**kwargs)
        blocklists = Blocklists.from_files(url_blocklist, domain_blocklist, word_blocklist)
        for line in _stdin_lines():
            doc = _parse_doc_or_emit_error(line)
            if doc is None:
                continue
            verdict = heuristic_verdict(doc, cfg, blocklists)
            _emit({"id": doc.id, "keep": verdict.keep, "rule": verdict.rule_id or None})
        return
    if not (in_dir and out_dir):
        _fail(ValueError("corpus mode needs --input and --output (or use --verdicts)"))
    params = {
        "min_words": min_words,
        "max_words": max_words,
        "url_blocklist": url_blocklist,
        "domain_blocklist": domain_blocklist,
        "word_blocklist": word_blocklist,
    }
    params = {k: v for k, v in params.items() if v is not None}
    try:
        report = run_single_stage(
            StageSpec("heuristics", params), in_dir, out_dir, workers=workers
        )
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"kept {report.docs_kept}/{report.docs_in} docs -> {out_dir}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
def score(model_path):
    """Score JSONL docs on stdin with a trained classifier: {"id","score"}."""
    from .classifier import LinearClassifier

    try:
        clf = LinearClassifier.load(model_path)
    except CorpusError as exc:
        _fail(exc)
    for line in _stdin_lines():
        doc = _parse_doc_or_emit_error(line)
        if doc is None:
            continue
        _emit({"id": doc.id, "score": clf.score_text(doc.text)})


@main.command()
@click.option("--input", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "out_dir", required=True, type=click.Path())
@click.option("--k", type=int, default=None, help="Cluster count (default: size-based).")
@click.option("--min-quality", type=float, default=None)
@click.option("--override-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--workers", type=int, default=1)
def cluster(in_dir, out_dir, k, min_quality, override_file, seed, workers):
    """Cluster docs and drop clusters whose mean quality score is low."""
    params = {"k": k, "min_quality": min_quality, "override_file": override_file}
    params = {key: val for key, val in params.items() if val is not None}
    try:
        report = run_single_stage(
            StageSpec("cluster", params), in_dir, out_dir, seed=seed, workers=workers
        )
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"kept {report.docs_kept}/{report.docs_in} docs -> {out_dir}")


@main.command()
@click.option("--input", "in_dir", type=click.Path(exists=True), default=None)
@click.option("--output", "out_dir", type=click.Path(), default=None)
@click.option("--signatures", is_flag=True,
              help="JSONL docs on stdin -> minhash signatures on stdout.")
@click.option("--shards", type=int, default=8)
@click.option("--workers", type=int, default=1)
@click.option("--seed", type=int, default=0)
def dedup(in_dir, out_dir, signatures, shards, workers, seed):
    """Run the four-pass dedup cascade over a corpus directory."""
    if signatures:
        for line in _stdin_lines():
            doc = _parse_doc_or_emit_error(line)
            if doc is None:
                continue
            try:
                sig = minhash_signature(shingle_set(doc.text))
            except EmptyShingles as exc:
                _emit({"id": doc.id, "signature": None, "error": str(exc)})
                continue
            _emit({"id": doc.id, "signature": [f"{v:016x}" for v in sig.tolist()]})
        return
    if not (in_dir and out_dir):
        _fail(ValueError("corpus mode needs --input and --output (or use --signatures)"))
    cfg = PipelineConfig(
        inputs=[in_dir],
        output_dir=out_dir,
        shards=shards,
        workers=workers,
        seed=seed,
        stages=[StageSpec("dedup")],
    )
    try:
        result = run_pipeline(cfg)
    except CorpusError as exc:
        _fail(exc)
    click.echo(render_run_text(result.ingest, result.stages), nl=False)
    click.echo(f"final corpus: {result.final_dir}")


@main.command()
@click.option("--input", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "out_dir", required=True, type=click.Path())
@click.option("--keep-prob", "keep_probs", multiple=True,
              help="label=prob pairs, e.g. --keep-prob ads=0.1 (repeatable).")
@click.option("--seed", type=int, default=0)
@click.option("--workers", type=int, default=1)
def sample(in_dir, out_dir, keep_probs, seed, workers):
    """Down-sample by topic label (labels must already be on the docs)."""
    params = {}
    if keep_probs:
        table = {}
        for item in keep_probs:
            label, _, prob = item.partition("=")
            try:
                table[label] = float(prob)
            except ValueError:
                _fail(ValueError(f"--keep-prob expects label=prob, got {item!r}"))
        params["keep_prob"] = table
    try:
        report = run_single_stage(
            StageSpec("downsample", params), in_dir, out_dir, seed=seed, workers=workers
        )
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"kept {report.docs_kept}/{report.docs_in} docs -> {out_dir}")


@main.command("tokenize-train")
@click.option("--input", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--output", "model_path", required=True, type=click.Path())
@click.option("--vocab-size", type=int, default=4096, show_default=True)
def tokenize_train(in_dir, model_path, vocab_size):
    """Train a byte-level BPE tokenizer on a corpus directory."""
    try:
        tok = train_bpe(
            (doc.text for doc in read_corpus_dir(in_dir)),
            TokenizerConfig(vocab_size=vocab_size),
        )
        tok.save(model_path)
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"trained tokenizer with {tok.vocab_size} tokens -> {model_path}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--encode", "mode", flag_value="encode")
@click.option("--decode", "mode", flag_value="decode")
@click.option("--input", "in_dir", type=click.Path(exists=True), default=None)
@click.option("--output", "out_path", type=click.Path(), default=None)
def tokenize(model_path, mode, in_dir, out_path):
    """Encode a corpus to a token file, or stream-encode/decode JSONL."""
    try:
        tok = Tokenizer.load(model_path)
    except CorpusError as exc:
        _fail(exc)
    if mode == "encode":
        for line in _stdin_lines():
            rec = json.loads(line)
            out = {"ids": tok.encode(rec.get("text", ""))}
            if "id" in rec:
                out["id"] = rec["id"]
            _emit(out)
        return
    if mode == "decode":
        for line in _stdin_lines():
            rec = json.loads(line)
            out = {"text": tok.decode(rec.get("ids", []))}
            if "id" in rec:
                out["id"] = rec["id"]
            _emit(out)
        return
    if not (in_dir and out_path):
        _fail(ValueError("corpus mode needs --input and --output (or --encode/--decode)"))
    count = write_token_corpus(
        out_path, ((doc.id, tok.encode(doc.text)) for doc in read_corpus_dir(in_dir))
    )
    click.echo(f"tokenized {count} docs -> {out_path}")


@main.command()
@click.option("--input", "token_path", required=True, type=click.Path(exists=True))
@click.option("--output", "out_path", required=True, type=click.Path())
@click.option("--seq-len", type=int, default=4096, show_default=True)
@click.option("--upsample", is_flag=True, help="Length-based up-sampling before packing.")
@click.option("--seed", type=int, default=0)
def pack(token_path, out_path, seq_len, upsample, seed):
    """Pack a token corpus into fixed-length training sequences."""
    try:
        docs = read_token_corpus(token_path)
        entries = ((doc_id, ids) for doc_id, ids in docs)
        if upsample:
            entries = length_upsample(entries, UpsampleWeights(seed=seed))
        count = write_packed_corpus(out_path, pack_sequences(entries, seq_len), seq_len)
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"packed {len(docs)} docs into {count} sequences of {seq_len} -> {out_path}")


@main.command()
@click.option("--tokens", "token_path", required=True, type=click.Path(exists=True),
              help="CCTK filler corpus (from `tokenize`).")
@click.option("--tokenizer", "model_path", required=True, type=click.Path(exists=True))
@click.option("--output", "out_dir", required=True, type=click.Path())
@click.option("--lengths", default=",".join(str(n) for n in DESK_LENGTHS), show_default=True)
@click.option("--depths", default=",".join(str(d) for d in DESK_DEPTHS), show_default=True)
@click.option("--needle", default=_DEFAULT_NEEDLE)
@click.option("--question", default=_DEFAULT_QUESTION)
@click.option("--answer", default=_DEFAULT_ANSWER)
@click.option("--seed", type=int, default=0)
def haystack(token_path, model_path, out_dir, lengths, depths, needle, question, answer, seed):
    """Generate a needle-in-a-haystack retrieval grid."""
    try:
        tok = Tokenizer.load(model_path)
        corpus = read_token_corpus(token_path)
        instances = haystack_grid(
            lengths=[int(x) for x in lengths.split(",")],
            depths=[float(x) for x in depths.split(",")],
            needle=needle,
            question=question,
            answer=answer,
            corpus=corpus,
            tokenizer=tok,
            seed=seed,
        )
        token_file, manifest = write_haystack_manifest(out_dir, instances)
    except CorpusError as exc:
        _fail(exc)
    click.echo(f"wrote {len(instances)} instances -> {token_file} + {manifest}")


@main.command()
@click.option("--input", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--unit", type=click.Choice(["word", "bpe"]), default="word", show_default=True)
@click.option("--tokenizer", "model_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
def report(in_dir, unit, model_path, as_json):
    """Summarize corpus composition by source, language, and topic."""
    try:
        tok = Tokenizer.load(model_path) if model_path else None
        mix = report_mixture(read_corpus_dir(in_dir), token_unit=unit, tokenizer=tok)
    except CorpusError as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps(mix.to_dict(), sort_keys=True, indent=1))
    else:
        click.echo(mix.render_text(), nl=False)


if __name__ == "__main__":
    main()

"""Generate a synthetic corpus with planted, known ground truth.

Kinds:
  pipeline    full mix: clean prose, CJK, junk, duplicates, ads (default)
  dedup       heavy planted duplication for exercising the dedup cascade
  throughput  uniform prose sized in MB, for benchmarks
  lm          clean prose only, for LM/tokenizer training

    python3 scripts/make_synthetic_corpus.py --kind pipeline -n 10000 --output corpus/raw
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click

from corpuscade import synth
from corpuscade.corpus_io import Document, write_jsonl_shard


@click.command()
@click.option("--kind", type=click.Choice(["pipeline", "dedup", "throughput", "lm"]),
              default="pipeline")
@click.option("-n", "--n-docs", type=int, default=10_000)
@click.option("--mb", type=float, default=8.0, help="Size for --kind throughput.")
@click.option("--seed", type=int, default=0)
@click.option("--output", "out_dir", required=True, type=click.Path())
def main(kind: str, n_docs: int, mb: float, seed: int, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = None
    if kind == "pipeline":
        docs, truth = synth.pipeline_corpus(n_docs, seed=seed)
    elif kind == "dedup":
        docs, truth = synth.dedup_corpus(n_docs, seed=seed)
    elif kind == "throughput":
        docs = synth.throughput_docs(mb, seed=seed)
    else:
        docs = [
            Document(id=f"lm-{i:06d}", text=t, source="synthetic")
            for i, t in enumerate(synth.lm_corpus(n_docs, seed=seed))
        ]
    manifest = write_jsonl_shard(docs, out / "input.jsonl")
    size_mb = sum(len(d.text.encode("utf-8")) for d in docs) / 1e6
    click.echo(
        f"{manifest.doc_count} docs, {size_mb:.1f} MB -> {out / 'input.jsonl'} (+ manifest)"
    )
    if truth is not None:
        truth_path = out / "truth.json"
        truth_path.write_text(
            json.dumps(dataclasses.asdict(truth), indent=2), encoding="utf-8"
        )
        click.echo(f"planted ground truth -> {truth_path}")
        for kind, ids in sorted(truth.by_kind.items()):
            click.echo(f"  {kind:<18}{len(ids):>6} docs")


if __name__ == "__main__":
    main()

"""Train desk-scale models for every pipeline stage and emit a ready config.

Synthetic training tasks stand in for the proprietary corpora the full
system trains on; the resulting files use the production formats, so a
pipeline run wired to them exercises every stage end to end.

    python3 scripts/train_desk_models.py --output models/
"""
from __future__ import annotations

from pathlib import Path

import click
import yaml

from corpuscade import synth
from corpuscade.classifier import train_classifier
from corpuscade.config import PipelineConfig, default_stages
from corpuscade.langid import train_langid
from corpuscade.ngram_lm import train_ngram_lm
from corpuscade.tokenizer import TokenizerConfig, train_bpe
from corpuscade.topics import train_topic


@click.command()
@click.option("--output", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
@click.option("--task-size", type=int, default=400, help="Docs per class for the classifiers.")
@click.option("--lm-docs", type=int, default=300)
@click.option("--vocab-size", type=int, default=1024)
def main(out_dir: str, seed: int, task_size: int, lm_docs: int, vocab_size: int) -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    pos, neg = synth.quality_task(task_size, seed=seed + 11)
    quality = train_classifier(pos, neg, positive_tag="structured", negative_tag="shuffled")
    quality.save(root / "quality.npz")
    click.echo(f"quality classifier -> {root / 'quality.npz'}")

    pos, neg = synth.safety_task(task_size, seed=seed + 12)
    safety = train_classifier(pos, neg, positive_tag="safe", negative_tag="unsafe")
    safety.save(root / "safety.npz")
    click.echo(f"safety classifier -> {root / 'safety.npz'}")

    langid = train_langid(synth.langid_task(seed=seed + 13))
    langid.save(root / "langid.json")
    click.echo(f"langid profile -> {root / 'langid.json'}")

    lm = train_ngram_lm(synth.lm_corpus(lm_docs, seed=seed + 14))
    lm.save(root / "lm.json")
    click.echo(f"perplexity LM -> {root / 'lm.json'}")

    topic = train_topic(synth.topic_task(task_size + 200, seed=seed + 15))
    topic.save(root / "topic.json")
    click.echo(f"topic model -> {root / 'topic.json'}")

    tokenizer = train_bpe(
        synth.lm_corpus(max(120, lm_docs // 2), seed=seed + 16),
        TokenizerConfig(vocab_size=vocab_size),
    )
    tokenizer.save(root / "tokenizer.json")
    click.echo(f"tokenizer -> {root / 'tokenizer.json'}")

    cfg = PipelineConfig(
        inputs=["corpus/raw"],
        output_dir="runs/full",
        shards=16,
        workers=4,
        seed=seed,
        models={
            key: str(root / name)
            for key, name in [
                ("quality", "quality.npz"),
                ("safety", "safety.npz"),
                ("langid", "langid.json"),
                ("lm", "lm.json"),
                ("topic", "topic.json"),
                ("tokenizer", "tokenizer.json"),
            ]
        },
        stages=default_stages(),
    )
    config_path = root / "pipeline.yaml"
    config_path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
    click.echo(f"pipeline config -> {config_path} (edit inputs/output_dir, then: corpuscade run)")


if __name__ == "__main__":
    main()

import json
import re
import shutil
import subprocess

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from corpuscade import synth
from corpuscade.cli import main
from corpuscade.corpus_io import Document, read_corpus_dir, write_jsonl_shard
from corpuscade.packing import read_packed_corpus, read_token_corpus

runner = CliRunner()


def jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def doc_line(doc_id, text):
    return json.dumps({"id": doc_id, "text": text})


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    """Sixty labeled, scored docs split over two shards."""
    rng = np.random.default_rng(61)
    docs = []
    for i in range(60):
        topic = ("news", "fiction", "knowledge")[i % 3]
        docs.append(
            Document(
                id=f"doc-{i:03d}",
                source=("web", "books")[i % 2],
                lang="en",
                text=synth.make_doc_text(rng, topic),
                meta={"quality.score": 0.9, "topic.label": topic},
            )
        )
    d = tmp_path_factory.mktemp("cli_corpus")
    write_jsonl_shard(docs[:30], d / "shard-0000.jsonl")
    write_jsonl_shard(docs[30:], d / "shard-0001.jsonl")
    return d


def test_help_lists_commands():
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for name in (
        "run", "ingest", "filter", "score", "cluster", "dedup", "sample",
        "tokenize", "tokenize-train", "pack", "haystack", "report",
    ):
        assert name in result.output


def test_console_script_installed():
    exe = shutil.which("corpuscade")
    assert exe, "console script not on PATH"
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "Corpus curation" in proc.stdout


def test_ingest_cli(tmp_path):
    raw = tmp_path / "raw.jsonl"
    raw.write_text(
        doc_line("a", "one") + "\n" + doc_line("b", "two") + "\n"
        + doc_line("a", "dup id") + "\n",
        encoding="utf-8",
    )
    out = tmp_path / "out"
    result = runner.invoke(main, ["ingest", str(raw), "-o", str(out), "--shards", "2"])
    assert result.exit_code == 0
    assert "ingested 2 docs into 2 shards (1 records skipped)" in result.output
    assert sorted(d.id for d in read_corpus_dir(out)) == ["a", "b"]


def test_filter_verdicts_stream():
    text = synth.make_doc_text(np.random.default_rng(60))
    stdin = (
        doc_line("good", text) + "\n"
        + doc_line("short", "two words") + "\n"
        + "this is not json\n"
    )
    result = runner.invoke(main, ["filter", "--verdicts", "--min-words", "5"], input=stdin)
    assert result.exit_code == 0
    recs = jsonl(result.output)
    assert len(recs) == 3
    assert recs[0]["id"] == "good" and recs[0]["keep"] is True and recs[0]["rule"] is None
    assert recs[1]["id"] == "short" and recs[1]["keep"] is False
    assert recs[1]["rule"] == "min_words"
    assert recs[2]["id"] is None and "error" in recs[2]


def test_filter_corpus_mode(corpus_dir, tmp_path):
    out = tmp_path / "filtered"
    result = runner.invoke(
        main, ["filter", "--input", str(corpus_dir), "--output", str(out)]
    )
    assert result.exit_code == 0
    assert f"kept 60/60 docs -> {out}" in result.output


def test_filter_corpus_mode_requires_paths():
    result = runner.invoke(main, ["filter"])
    assert result.exit_code == 1
    assert "corpus mode needs --input and --output" in result.stderr


def test_score_stream(model_paths):
    stdin = doc_line("a", "a tidy sentence about libraries.") + "\n" + doc_line("b", "x") + "\n"
    result = runner.invoke(main, ["score", "--model", model_paths["quality"]], input=stdin)
    assert result.exit_code == 0
    recs = jsonl(result.output)
    assert [r["id"] for r in recs] == ["a", "b"]
    assert all(0.0 <= r["score"] <= 1.0 for r in recs)


def test_score_rejects_junk_model(tmp_path):
    bad = tmp_path / "model.npz"
    bad.write_text("nope", encoding="utf-8")
    result = runner.invoke(main, ["score", "--model", str(bad)], input="")
    assert result.exit_code == 1
    assert result.stderr.startswith("error:")


def test_cluster_cli(corpus_dir, tmp_path):
    out = tmp_path / "clustered"
    result = runner.invoke(
        main,
        ["cluster", "--input", str(corpus_dir), "--output", str(out), "--k", "3"],
    )
    assert result.exit_code == 0
    assert "kept 60/60 docs" in result.output
    labels = {d.meta["cluster.id"] for d in read_corpus_dir(out)}
    assert labels <= {0, 1, 2} and len(labels) > 1


def test_cluster_cli_needs_quality_scores(tmp_path):
    in_dir = tmp_path / "unscored"
    in_dir.mkdir()
    write_jsonl_shard(
        [Document(id="x", text="plain words here")], in_dir / "shard-0000.jsonl"
    )
    result = runner.invoke(
        main, ["cluster", "--input", str(in_dir), "--output", str(tmp_path / "out")]
    )
    assert result.exit_code == 1
    assert result.stderr.startswith("error:")


def test_dedup_signatures_stream():
    long_text = " ".join(f"token{i}" for i in range(40))
    stdin = doc_line("big", long_text) + "\n" + doc_line("tiny", "hi") + "\n"
    result = runner.invoke(main, ["dedup", "--signatures"], input=stdin)
    assert result.exit_code == 0
    recs = jsonl(result.output)
    assert recs[0]["id"] == "big"
    assert len(recs[0]["signature"]) == 128
    assert all(re.fullmatch(r"[0-9a-f]{16}", h) for h in recs[0]["signature"])
    assert recs[1] == {"id": "tiny", "signature": None, "error": recs[1]["error"]}
    assert recs[1]["error"]


def test_dedup_corpus_cli(tmp_path):
    rng = np.random.default_rng(62)
    texts = [synth.make_doc_text(rng) for _ in range(4)]
    docs = [Document(id=f"u{i}", text=t) for i, t in enumerate(texts)]
    docs.append(Document(id="copy", text=texts[0]))
    in_dir = tmp_path / "in"
    in_dir.mkdir()
    write_jsonl_shard(docs, in_dir / "shard-0000.jsonl")
    out = tmp_path / "deduped"
    result = runner.invoke(
        main, ["dedup", "--input", str(in_dir), "--output", str(out), "--shards", "2"]
    )
    assert result.exit_code == 0
    final = re.search(r"final corpus: (.+)", result.output).group(1)
    kept = {d.id for d in read_corpus_dir(final)}
    assert len(kept) == 4
    assert len(kept & {"u0", "copy"}) == 1


def test_sample_cli(corpus_dir, tmp_path):
    out = tmp_path / "sampled"
    result = runner.invoke(
        main,
        ["sample", "--input", str(corpus_dir), "--output", str(out),
         "--keep-prob", "news=0.0"],
    )
    assert result.exit_code == 0
    assert "kept 40/60 docs" in result.output
    assert all(d.meta["topic.label"] != "news" for d in read_corpus_dir(out))


def test_sample_cli_rejects_bad_prob(corpus_dir, tmp_path):
    for bad in ("ads", "ads=lots"):
        result = runner.invoke(
            main,
            ["sample", "--input", str(corpus_dir), "--output", str(tmp_path / "o"),
             "--keep-prob", bad],
        )
        assert result.exit_code == 1
        assert "--keep-prob expects label=prob" in result.stderr


def test_tokenize_train_and_stream(corpus_dir, tmp_path):
    model = tmp_path / "tok.json"
    result = runner.invoke(
        main,
        ["tokenize-train", "--input", str(corpus_dir), "--output", str(model),
         "--vocab-size", "300"],
    )
    assert result.exit_code == 0
    assert "trained tokenizer with" in result.output
    assert model.exists()

    encoded = runner.invoke(
        main,
        ["tokenize", "--model", str(model), "--encode"],
        input=json.dumps({"id": "x", "text": "hello world 2023"}) + "\n",
    )
    assert encoded.exit_code == 0
    rec = jsonl(encoded.output)[0]
    assert rec["id"] == "x" and rec["ids"]

    decoded = runner.invoke(
        main,
        ["tokenize", "--model", str(model), "--decode"],
        input=json.dumps({"ids": rec["ids"]}) + "\n",
    )
    assert decoded.exit_code == 0
    assert jsonl(decoded.output)[0]["text"] == "hello world 2023"


def test_tokenize_corpus_pack_haystack_chain(corpus_dir, model_paths, tmp_path):
    tok_model = model_paths["tokenizer"]
    tokens = tmp_path / "tokens.cctk"
    result = runner.invoke(
        main,
        ["tokenize", "--model", tok_model, "--input", str(corpus_dir),
         "--output", str(tokens)],
    )
    assert result.exit_code == 0
    assert f"tokenized 60 docs -> {tokens}" in result.output

    packed = tmp_path / "packed.ccpk"
    result = runner.invoke(
        main,
        ["pack", "--input", str(tokens), "--output", str(packed), "--seq-len", "128"],
    )
    assert result.exit_code == 0
    match = re.search(r"packed 60 docs into (\d+) sequences of 128", result.output)
    assert match
    seq_len, seqs = read_packed_corpus(packed)
    assert seq_len == 128
    assert len(seqs) == int(match.group(1)) > 0
    assert all(len(s.tokens) == 128 for s in seqs)

    hay_dir = tmp_path / "hay"
    result = runner.invoke(
        main,
        ["haystack", "--tokens", str(tokens), "--tokenizer", tok_model,
         "--output", str(hay_dir), "--lengths", "256,512", "--depths", "0,0.5,1"],
    )
    assert result.exit_code == 0
    assert "wrote 6 instances" in result.output
    rows = jsonl((hay_dir / "manifest.jsonl").read_text(encoding="utf-8"))
    assert [r["id"] for r in rows] == [
        "hay-L256-d0", "hay-L256-d0.5", "hay-L256-d1",
        "hay-L512-d0", "hay-L512-d0.5", "hay-L512-d1",
    ]
    entries = read_token_corpus(hay_dir / "haystack.cctk")
    assert [len(ids) for _, ids in entries] == [256, 256, 256, 512, 512, 512]


def test_report_cli(corpus_dir):
    result = runner.invoke(main, ["report", "--input", str(corpus_dir)])
    assert result.exit_code == 0
    assert "by source:" in result.output and "books" in result.output

    result = runner.invoke(main, ["report", "--input", str(corpus_dir), "--json"])
    assert result.exit_code == 0
    rec = json.loads(result.output)
    assert rec["total_docs"] == 60
    assert rec["token_unit"] == "word"


def test_report_bpe_needs_tokenizer(corpus_dir):
    result = runner.invoke(main, ["report", "--input", str(corpus_dir), "--unit", "bpe"])
    assert result.exit_code == 1
    assert result.stderr.startswith("error:")


def run_config(tmp_path, model_paths, out_name):
    rng = np.random.default_rng(63)
    raw = tmp_path / "raw"
    raw.mkdir(exist_ok=True)
    docs = [Document(id=f"r{i:02d}", text=synth.make_doc_text(rng)) for i in range(15)]
    write_jsonl_shard(docs, raw / "docs.jsonl")
    cfg = {
        "inputs": [str(raw)],
        "output_dir": str(tmp_path / out_name),
        "shards": 2,
        "workers": 1,
        "seed": 0,
        "models": {"langid": model_paths["langid"]},
        "stages": ["langid", "heuristics"],
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


def test_run_cli(tmp_path, model_paths):
    cfg = run_config(tmp_path, model_paths, "out")
    result = runner.invoke(main, ["run", "-c", str(cfg)])
    assert result.exit_code == 0
    assert "final corpus:" in result.output
    assert (tmp_path / "out" / "stage_02_heuristics" / "_COMPLETE").exists()


def test_run_cli_stop_and_resume(tmp_path, model_paths):
    cfg = run_config(tmp_path, model_paths, "out2")
    result = runner.invoke(main, ["run", "-c", str(cfg), "--stop-after", "langid"])
    assert result.exit_code == 0
    assert "stopped after stage 'langid'; resume with --resume" in result.output
    assert not (tmp_path / "out2" / "stage_02_heuristics").exists()

    result = runner.invoke(main, ["run", "-c", str(cfg), "--resume"])
    assert result.exit_code == 0
    assert "final corpus:" in result.output
    assert (tmp_path / "out2" / "stage_02_heuristics" / "_COMPLETE").exists()


def test_run_cli_rejects_bad_config(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(
        yaml.safe_dump({"inputs": ["/does/not/exist"], "output_dir": str(tmp_path / "o")}),
        encoding="utf-8",
    )
    result = runner.invoke(main, ["run", "-c", str(cfg)])
    assert result.exit_code == 1
    assert result.stderr.startswith("error:")

import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from corpuscade import synth
from corpuscade.config import PipelineConfig, StageSpec, default_stages
from corpuscade.corpus_io import Document, StageReport, read_corpus_dir, write_jsonl_shard
from corpuscade.errors import (
    AccountingError,
    ConfigError,
    MissingTokenizer,
    StageFailure,
)
from corpuscade.pipeline import (
    COMPLETE_MARKER,
    INGEST_DIR,
    check_conservation,
    ingest_corpus,
    render_run_text,
    report_mixture,
    run_pipeline,
    run_single_stage,
)

from .test_corpus_io import wet_record


@pytest.fixture(scope="module")
def planted():
    return synth.pipeline_corpus(400, seed=51)


@pytest.fixture(scope="module")
def input_dir(tmp_path_factory, planted):
    docs, _ = planted
    raw = tmp_path_factory.mktemp("raw")
    write_jsonl_shard(docs, raw / "input.jsonl")
    return raw


def make_cfg(input_dir, out_dir, model_paths, workers=1, stages=None):
    return PipelineConfig(
        inputs=[str(input_dir)],
        output_dir=str(out_dir),
        shards=4,
        workers=workers,
        seed=0,
        models=dict(model_paths),
        stages=stages if stages is not None else default_stages(),
    )


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, input_dir, model_paths):
    out = tmp_path_factory.mktemp("run_a")
    return run_pipeline(make_cfg(input_dir, out, model_paths))


def assert_same_tree(a: Path, b: Path):
    """Byte-identical run directories, timing files aside."""
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        if rel.name == "perf.json":
            continue
        pa, pb = a / rel, b / rel
        if rel.suffix == ".npz":
            with np.load(pa) as za, np.load(pb) as zb:
                assert sorted(za.files) == sorted(zb.files)
                for key in za.files:
                    assert np.array_equal(za[key], zb[key]), rel
        else:
            assert pa.read_bytes() == pb.read_bytes(), rel


# --- full run ------------------------------------------------------------------------


def test_run_produces_every_stage_dir(full_run):
    out = full_run.output_dir
    names = sorted(p.name for p in out.glob("stage_*") if p.is_dir())
    assert names[0] == INGEST_DIR
    assert len(names) == 14  # ingest + 13 expanded stages
    assert names[-1] == "stage_13_downsample"
    for name in names:
        stage = out / name
        assert (stage / COMPLETE_MARKER).exists()
        assert (stage / "report.json").exists()
        assert (stage / "perf.json").exists()
        assert len(list(stage.glob("shard-*.jsonl"))) == 4
    assert full_run.final_dir == out / "stage_13_downsample"
    assert len(full_run.stages) == 13


def test_reports_chain_and_balance(full_run):
    check_conservation(full_run.ingest, full_run.stages)
    for left, right in zip([full_run.ingest] + full_run.stages, full_run.stages):
        assert right.docs_in == left.docs_kept


def test_final_docs_carry_stage_annotations(full_run):
    docs = list(read_corpus_dir(full_run.final_dir))
    assert len(docs) == full_run.docs_out > 0
    assert len({d.id for d in docs}) == len(docs)
    for doc in docs:
        assert doc.lang == "en"
        assert 0.5 <= doc.meta["quality.score"] <= 1.0
        assert 0.5 <= doc.meta["safety.score"] <= 1.0
        assert doc.meta["perplexity.bucket"] in ("head", "middle")
        assert isinstance(doc.meta["cluster.id"], int)
        assert doc.meta["topic.label"]
        assert "coherence.mean_sim" in doc.meta


def test_planted_junk_is_dropped(full_run, planted):
    _, truth = planted
    drops = Counter()
    for report in full_run.stages:
        drops.update(report.drop_reasons)
    # stage order pins where the first-touch kinds die
    assert sum(n for r, n in drops.items() if r.startswith("langid.")) >= 10
    assert sum(n for r, n in drops.items() if r.startswith("heuristics.")) >= 15
    assert drops["perplexity.tail"] > 0
    assert drops["dedup_minhash.near_duplicate"] + drops["dedup_exact.duplicate"] >= 6
    assert drops["downsample.ads"] >= 3

    final_docs = list(read_corpus_dir(full_run.final_dir))
    final_ids = {d.id.split("#")[0] for d in final_docs}
    for kind in ("cjk", "garbled", "too_short", "shuffled", "unsafe"):
        assert not final_ids & set(truth.by_kind[kind]), kind
    for a, b in truth.exact_pairs:
        assert not (a in final_ids and b in final_ids)
    for a, b, _ in truth.near_pairs:
        assert not (a in final_ids and b in final_ids)
    kept_ads = final_ids & set(truth.by_kind["ads"])
    assert len(kept_ads) <= len(truth.by_kind["ads"]) // 2
    assert sum(1 for d in final_docs if truth.passage_text in d.text) <= 1


def test_run_report_files(full_run):
    rec = json.loads((full_run.output_dir / "report.json").read_text(encoding="utf-8"))
    assert rec["docs_out"] == full_run.docs_out
    assert [s["stage_name"] for s in rec["stages"]] == [
        s.stage_name for s in full_run.stages
    ]
    assert "seconds" not in rec["ingest"]
    text = (full_run.output_dir / "report.txt").read_text(encoding="utf-8")
    assert text == render_run_text(full_run.ingest, full_run.stages)
    assert "downsample" in text


def test_worker_count_does_not_change_bytes(
    tmp_path_factory, input_dir, model_paths, full_run
):
    out = tmp_path_factory.mktemp("run_b")
    result = run_pipeline(make_cfg(input_dir, out, model_paths, workers=2))
    assert result.docs_out == full_run.docs_out
    assert_same_tree(full_run.output_dir, out)


def test_interrupt_and_resume_matches_uninterrupted(
    tmp_path_factory, input_dir, model_paths, full_run
):
    out = tmp_path_factory.mktemp("run_c")
    cfg = make_cfg(input_dir, out, model_paths)
    first = run_pipeline(cfg, stop_after="quality")
    assert first.stopped_after == "quality"
    assert first.final_dir.name == "stage_04_quality"
    assert not (out / "stage_05_safety").exists()

    second = run_pipeline(cfg, resume=True)
    assert second.stopped_after is None
    assert_same_tree(full_run.output_dir, out)

    # a stage without its completion marker is redone on the next resume
    marker = out / "stage_13_downsample" / COMPLETE_MARKER
    marker.unlink()
    third = run_pipeline(cfg, resume=True)
    assert marker.exists()
    assert_same_tree(full_run.output_dir, out)
    assert third.docs_out == full_run.docs_out


def test_stop_after_rejects_unknown_stage(tmp_path, input_dir, model_paths):
    cfg = make_cfg(input_dir, tmp_path / "out", model_paths)
    with pytest.raises(ConfigError):
        run_pipeline(cfg, stop_after="mystery")


def test_stop_after_dedup_alias(tmp_path_factory, model_paths):
    raw = tmp_path_factory.mktemp("mini_raw")
    rng = np.random.default_rng(3)
    docs = [
        Document(id=f"m{i:03d}", source="books", text=synth.make_doc_text(rng))
        for i in range(20)
    ]
    write_jsonl_shard(docs, raw / "mini.jsonl")
    out = tmp_path_factory.mktemp("mini_out")
    cfg = make_cfg(raw, out, model_paths, stages=[StageSpec("dedup")])
    result = run_pipeline(cfg, stop_after="dedup")
    assert result.stopped_after == "dedup_substring"
    assert result.docs_out == 20


def test_empty_input_runs_cleanly(tmp_path, model_paths):
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "empty.jsonl").write_text("", encoding="utf-8")
    out = tmp_path / "out"
    cfg = make_cfg(
        raw,
        out,
        model_paths,
        stages=[StageSpec("langid"), StageSpec("heuristics"), StageSpec("dedup")],
    )
    result = run_pipeline(cfg)
    assert result.docs_out == 0
    assert result.ingest.docs_in == 0
    assert all(r.docs_in == 0 for r in result.stages)
    assert (out / "report.json").exists()


# --- ingest --------------------------------------------------------------------------


def test_ingest_round_robin_and_duplicate_ids(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "a.jsonl").write_text(
        '{"id": "a", "text": "one"}\n{"id": "b", "text": "two"}\n', encoding="utf-8"
    )
    (raw / "b.jsonl").write_text(
        '{"id": "c", "text": "three"}\n{"id": "a", "text": "again"}\n',
        encoding="utf-8",
    )
    out = tmp_path / "shards"
    report = ingest_corpus([str(raw)], out, shards=2)
    assert report.docs_in == 4
    assert report.docs_kept == 3
    assert report.drop_reasons == {"ingest.duplicate_id": 1}
    shard0 = [d.id for d in read_corpus_dir(out) if True]
    assert sorted(shard0) == ["a", "b", "c"]
    first = (out / "shard-0000.jsonl").read_text(encoding="utf-8").splitlines()
    second = (out / "shard-0001.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(x)["id"] for x in first] == ["a", "c"]
    assert [json.loads(x)["id"] for x in second] == ["b"]


def test_ingest_mixed_formats_and_skips(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "docs.jsonl").write_text(
        '{"id": "good", "text": "fine"}\nnot json at all\n', encoding="utf-8"
    )
    (raw / "crawl.wet").write_bytes(
        wet_record(b"http://example.com/x", "page text".encode("utf-8"))
        + wet_record(b"http://example.com/y", b"head", wtype=b"warcinfo")
    )
    report = ingest_corpus([str(raw)], tmp_path / "out", shards=1)
    assert report.docs_kept == 2
    assert report.drop_reasons == {
        "ingest.parse_error": 1,
        "ingest.non_conversion_record": 1,
    }
    ids = {d.id for d in read_corpus_dir(tmp_path / "out")}
    assert "good" in ids
    assert any(i.startswith("cc-") for i in ids)


def test_ingest_rejects_unknown_file_types(tmp_path):
    bad = tmp_path / "data.csv"
    bad.write_text("a,b\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        ingest_corpus([str(bad)], tmp_path / "out", shards=1)


# --- single stages -------------------------------------------------------------------


def labeled_corpus_dir(tmp_path, n_ads=30, n_news=30):
    rng = np.random.default_rng(9)
    docs = []
    for i in range(n_ads):
        docs.append(
            Document(
                id=f"ad-{i:03d}",
                text=synth.make_ad_text(rng),
                meta={"topic.label": "ads"},
            )
        )
    for i in range(n_news):
        docs.append(
            Document(
                id=f"news-{i:03d}",
                text=synth.make_doc_text(rng, "news"),
                meta={"topic.label": "news"},
            )
        )
    in_dir = tmp_path / "labeled"
    in_dir.mkdir()
    write_jsonl_shard(docs[::2], in_dir / "shard-0000.jsonl")
    write_jsonl_shard(docs[1::2], in_dir / "shard-0001.jsonl")
    return in_dir


def test_single_stage_downsample(tmp_path):
    in_dir = labeled_corpus_dir(tmp_path)
    out_dir = tmp_path / "sampled"
    report = run_single_stage(
        StageSpec("downsample", {"keep_prob": {"ads": 0.0}}), in_dir, out_dir
    )
    assert report.docs_in == 60
    assert report.drop_reasons == {"downsample.ads": 30}
    kept = list(read_corpus_dir(out_dir))
    assert len(kept) == 30
    assert all(d.meta["topic.label"] == "news" for d in kept)
    assert sorted(p.name for p in out_dir.glob("*.jsonl")) == [
        "shard-0000.jsonl",
        "shard-0001.jsonl",
    ]


def test_single_stage_quality_drops_word_salad(tmp_path, model_paths):
    rng = np.random.default_rng(17)
    docs = [
        Document(id=f"good-{i}", text=synth.make_doc_text(rng)) for i in range(10)
    ] + [
        Document(id=f"salad-{i}", text=synth.shuffle_words(rng, synth.make_doc_text(rng)))
        for i in range(10)
    ]
    in_dir = tmp_path / "in"
    in_dir.mkdir()
    write_jsonl_shard(docs, in_dir / "shard-0000.jsonl")
    report = run_single_stage(
        StageSpec("quality"), in_dir, tmp_path / "out", models=model_paths
    )
    assert report.drop_reasons.get("quality.low_score", 0) >= 8
    kept = {d.id for d in read_corpus_dir(tmp_path / "out")}
    assert sum(1 for i in kept if i.startswith("good-")) >= 8


def test_single_stage_safety_drops_unsafe(tmp_path, model_paths):
    rng = np.random.default_rng(18)
    docs = [
        Document(id=f"good-{i}", text=synth.make_doc_text(rng)) for i in range(10)
    ] + [
        Document(id=f"bad-{i}", text=synth.make_unsafe_text(rng)) for i in range(10)
    ]
    in_dir = tmp_path / "in"
    in_dir.mkdir()
    write_jsonl_shard(docs, in_dir / "shard-0000.jsonl")
    report = run_single_stage(
        StageSpec("safety"), in_dir, tmp_path / "out", models=model_paths
    )
    assert report.drop_reasons.get("safety.unsafe", 0) >= 8
    kept = {d.id for d in read_corpus_dir(tmp_path / "out")}
    assert sum(1 for i in kept if i.startswith("good-")) >= 8


def test_single_stage_failure_on_corrupt_shard(tmp_path):
    in_dir = tmp_path / "corrupt"
    in_dir.mkdir()
    (in_dir / "shard-0000.jsonl").write_text("garbage\n", encoding="utf-8")
    with pytest.raises(StageFailure) as exc_info:
        run_single_stage(StageSpec("downsample"), in_dir, tmp_path / "out")
    assert exc_info.value.stage == "downsample"


def test_single_stage_failure_on_unlabeled_docs(tmp_path):
    in_dir = tmp_path / "unlabeled"
    in_dir.mkdir()
    write_jsonl_shard(
        [Document(id="x", text="some words here")], in_dir / "shard-0000.jsonl"
    )
    with pytest.raises(StageFailure):
        run_single_stage(StageSpec("downsample"), in_dir, tmp_path / "out")


def test_single_stage_failure_on_missing_model(tmp_path):
    in_dir = tmp_path / "docs"
    in_dir.mkdir()
    write_jsonl_shard(
        [Document(id="x", text="some words here")], in_dir / "shard-0000.jsonl"
    )
    with pytest.raises(StageFailure):
        run_single_stage(
            StageSpec("topic"),
            in_dir,
            tmp_path / "out",
            models={"topic": str(tmp_path / "nope.json")},
        )


# --- conservation checks -------------------------------------------------------------


def rep(name, docs_in, kept, dropped, born=0):
    r = StageReport(
        stage_name=name,
        docs_in=docs_in,
        docs_kept=kept,
        docs_dropped=dropped,
        docs_born=born,
    )
    for _ in range(dropped):
        r.count_drop(f"{name}.x")
    return r


def test_conservation_accepts_balanced_chain():
    check_conservation(rep("ingest", 10, 8, 2), [rep("a", 8, 6, 2), rep("b", 6, 6, 0)])


def test_conservation_rejects_chain_break():
    with pytest.raises(AccountingError):
        check_conservation(rep("ingest", 10, 8, 2), [rep("a", 7, 6, 1)])


def test_conservation_rejects_unbalanced_stage():
    bad = StageReport(stage_name="a", docs_in=8, docs_kept=6, docs_dropped=1)
    with pytest.raises(AccountingError):
        check_conservation(rep("ingest", 10, 8, 2), [bad])


# --- mixture reporting ---------------------------------------------------------------


def mixture_docs():
    return [
        Document(id="a", source="books", lang="en", text="three words here",
                 meta={"topic.label": "fiction"}),
        Document(id="b", source="books", lang="en", text="two words",
                 meta={"topic.label": "fiction"}),
        Document(id="c", source="web", text="one"),
    ]


def test_mixture_tallies_docs_and_tokens():
    mix = report_mixture(mixture_docs())
    assert mix.total_docs == 3
    assert mix.total_tokens == 6
    assert mix.by_source == {"books": [2, 5], "web": [1, 1]}
    assert mix.by_lang == {"en": [2, 5], "und": [1, 1]}
    assert mix.by_topic == {"fiction": [2, 5], "unlabeled": [1, 1]}
    text = mix.render_text()
    assert "by source:" in text and "books" in text
    assert mix.to_dict()["token_unit"] == "word"


def test_mixture_bpe_unit(bpe_tokenizer):
    mix = report_mixture(mixture_docs(), token_unit="bpe", tokenizer=bpe_tokenizer)
    expected = sum(len(bpe_tokenizer.encode(d.text)) for d in mixture_docs())
    assert mix.total_tokens == expected


def test_mixture_guards():
    with pytest.raises(ValueError):
        report_mixture([], token_unit="chars")
    with pytest.raises(MissingTokenizer):
        report_mixture([], token_unit="bpe")

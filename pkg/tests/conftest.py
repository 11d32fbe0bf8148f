"""Shared fixtures: desk-scale models trained once per session on synthetic tasks."""
from __future__ import annotations

from pathlib import Path

import pytest

from corpuscade import synth
from corpuscade.classifier import train_classifier
from corpuscade.langid import train_langid
from corpuscade.ngram_lm import train_ngram_lm
from corpuscade.tokenizer import TokenizerConfig, train_bpe
from corpuscade.topics import train_topic


@pytest.fixture(scope="session")
def quality_clf():
    pos, neg = synth.quality_task(400, seed=11)
    return train_classifier(pos, neg, positive_tag="structured", negative_tag="shuffled")


@pytest.fixture(scope="session")
def safety_clf():
    pos, neg = synth.safety_task(400, seed=12)
    return train_classifier(pos, neg, positive_tag="safe", negative_tag="unsafe")


@pytest.fixture(scope="session")
def langid_profile():
    return train_langid(synth.langid_task(seed=13))


@pytest.fixture(scope="session")
def lm_model():
    return train_ngram_lm(synth.lm_corpus(300, seed=14))


@pytest.fixture(scope="session")
def topic_model():
    return train_topic(synth.topic_task(600, seed=15))


@pytest.fixture(scope="session")
def bpe_tokenizer():
    return train_bpe(synth.lm_corpus(120, seed=16), TokenizerConfig(vocab_size=1024))


@pytest.fixture(scope="session")
def model_paths(
    tmp_path_factory,
    quality_clf,
    safety_clf,
    langid_profile,
    lm_model,
    topic_model,
    bpe_tokenizer,
) -> dict[str, str]:
    """All trained models saved to disk; maps model key to file path."""
    root: Path = tmp_path_factory.mktemp("models")
    quality_clf.save(root / "quality.npz")
    safety_clf.save(root / "safety.npz")
    langid_profile.save(root / "langid.json")
    lm_model.save(root / "lm.json")
    topic_model.save(root / "topic.json")
    bpe_tokenizer.save(root / "tokenizer.json")
    return {
        "quality": str(root / "quality.npz"),
        "safety": str(root / "safety.npz"),
        "langid": str(root / "langid.json"),
        "lm": str(root / "lm.json"),
        "topic": str(root / "topic.json"),
        "tokenizer": str(root / "tokenizer.json"),
    }

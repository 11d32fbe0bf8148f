import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpuscade.errors import ModelFormatError
from corpuscade.packing import (
    DEFAULT_BUCKET_BOUNDS,
    DEFAULT_BUCKET_WEIGHTS,
    PackedSequence,
    UpsampleWeights,
    length_upsample,
    pack_sequences,
    read_packed_corpus,
    read_token_corpus,
    upsample_copies,
    write_packed_corpus,
    write_token_corpus,
)
from corpuscade.tokenizer import EOS_ID, PAD_ID

doc_lengths = st.lists(st.integers(min_value=0, max_value=70), max_size=12)


def docs_of(lengths):
    return [(f"d{i}", list(range(n))) for i, n in enumerate(lengths)]


# --- upsampling --------------------------------------------------------------------


def test_weight_validation():
    with pytest.raises(ValueError):
        UpsampleWeights(bounds=(10,), weights=(1.0,))
    with pytest.raises(ValueError):
        UpsampleWeights(bounds=(10,), weights=(1.0, 0.0))
    with pytest.raises(ValueError):
        UpsampleWeights(bounds=(20, 10), weights=(1.0, 1.0, 1.0))


def test_bucket_boundaries_are_half_open():
    w = UpsampleWeights()
    lo, hi = DEFAULT_BUCKET_BOUNDS
    assert w.bucket(lo - 1) == 0
    assert w.bucket(lo) == 1
    assert w.bucket(hi - 1) == 1
    assert w.bucket(hi) == 2
    assert w.bucket(10**9) == 2
    assert w.weight(hi) == DEFAULT_BUCKET_WEIGHTS[2]


def test_integer_weights_are_exact_copy_counts():
    w = UpsampleWeights(bounds=(10,), weights=(1.0, 3.0), seed=0)
    assert all(upsample_copies(f"d{i}", 5, w) == 1 for i in range(200))
    assert all(upsample_copies(f"d{i}", 50, w) == 3 for i in range(200))


def test_fractional_weight_is_a_hash_bernoulli():
    w = UpsampleWeights(bounds=(10,), weights=(1.0, 2.5), seed=0)
    copies = [upsample_copies(f"d{i}", 64, w) for i in range(4000)]
    assert set(copies) <= {2, 3}
    assert copies == [upsample_copies(f"d{i}", 64, w) for i in range(4000)]
    extra = sum(c == 3 for c in copies)
    sigma = (4000 * 0.25) ** 0.5
    assert abs(extra - 2000) <= 4 * sigma


def test_seed_moves_the_fractional_decisions():
    a = UpsampleWeights(bounds=(10,), weights=(1.0, 1.5), seed=1)
    b = UpsampleWeights(bounds=(10,), weights=(1.0, 1.5), seed=2)
    decided_a = [upsample_copies(f"d{i}", 99, a) for i in range(500)]
    decided_b = [upsample_copies(f"d{i}", 99, b) for i in range(500)]
    assert decided_a != decided_b


def test_length_upsample_repeats_in_place():
    w = UpsampleWeights(bounds=(10,), weights=(1.0, 2.0), seed=0)
    docs = [("a", [1] * 5), ("b", [2] * 20), ("c", [3] * 5)]
    out = list(length_upsample(docs, w))
    assert out == [("a", [1] * 5), ("b", [2] * 20), ("b", [2] * 20), ("c", [3] * 5)]


# --- packing -----------------------------------------------------------------------


def assert_well_packed(docs, seqs, seq_len, sep=EOS_ID, pad=PAD_ID):
    by_id = dict(docs)
    total = 0
    for seq in seqs:
        assert len(seq.tokens) == seq_len
        pos = 0
        for doc_id, off, length in seq.spans:
            assert seq.tokens[pos : pos + length] == list(by_id[doc_id][off : off + length])
            pos += length
            assert seq.tokens[pos] == sep
            pos += 1
        assert seq.separator_positions == [
            p - 1
            for p in np.cumsum([length + 1 for _, _, length in seq.spans]).tolist()
        ]
        if seq.padded:
            assert all(t == pad for t in seq.tokens[pos:])
            assert pos < seq_len or not seq.spans
        else:
            assert pos == seq_len
        total += seq.content_tokens
    assert total == sum(len(ids) for _, ids in docs)


@given(doc_lengths, st.integers(min_value=2, max_value=33))
@settings(max_examples=120, deadline=None)
def test_packing_conserves_every_token(lengths, seq_len):
    docs = docs_of(lengths)
    seqs = list(pack_sequences(docs, seq_len))
    assert_well_packed(docs, seqs, seq_len)


def test_exact_fit_is_not_padded():
    seqs = list(pack_sequences([("a", list(range(7)))], 8))
    assert len(seqs) == 1 and not seqs[0].padded
    assert seqs[0].tokens == list(range(7)) + [EOS_ID]


def test_two_docs_share_a_window():
    seqs = list(pack_sequences([("a", [9] * 3), ("b", [8] * 3)], 8))
    assert len(seqs) == 1
    assert seqs[0].spans == [("a", 0, 3), ("b", 0, 3)]
    assert seqs[0].separator_positions == [3, 7]


def test_long_document_splits_across_windows():
    seqs = list(pack_sequences([("a", list(range(20)))], 8))
    assert [s.spans for s in seqs] == [
        [("a", 0, 7)],
        [("a", 7, 7)],
        [("a", 14, 6)],
    ]
    assert [s.padded for s in seqs] == [False, False, True]


def test_dead_slot_is_padded_out():
    # 6 ids + separator leave room for nothing: next doc starts fresh
    seqs = list(pack_sequences([("a", [1] * 6), ("b", [2] * 7)], 8))
    assert seqs[0].padded and seqs[0].spans == [("a", 0, 6)]
    assert seqs[0].tokens[-1] == PAD_ID
    assert not seqs[1].padded and seqs[1].spans == [("b", 0, 7)]


def test_seq_len_floor():
    with pytest.raises(ValueError):
        list(pack_sequences([("a", [1])], 1))


# --- token files -------------------------------------------------------------------


def test_token_corpus_round_trip(tmp_path):
    path = tmp_path / "corpus.cctk"
    docs = [("a", [1, 2, 3]), ("b", []), ("c", [4_000_000_000])]
    assert write_token_corpus(path, docs) == 3
    back = read_token_corpus(path)
    assert [(i, list(ids)) for i, ids in back] == [(i, list(ids)) for i, ids in docs]
    assert (tmp_path / "corpus.cctk.docs.jsonl").exists()


def test_token_file_rejects_junk(tmp_path):
    path = tmp_path / "bad.cctk"
    path.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(ModelFormatError):
        read_token_corpus(path)
    path.write_bytes(b"CC")
    with pytest.raises(ModelFormatError):
        read_token_corpus(path)
    path.write_bytes(b"CCTK" + struct.pack("<II", 99, 0))
    with pytest.raises(ModelFormatError):
        read_token_corpus(path)


def test_packed_corpus_round_trip(tmp_path):
    path = tmp_path / "packed.ccpk"
    docs = [("a", list(range(11))), ("b", list(range(5)))]
    seqs = list(pack_sequences(docs, 8))
    assert write_packed_corpus(path, seqs, 8) == len(seqs)
    seq_len, back = read_packed_corpus(path)
    assert seq_len == 8
    assert [(s.tokens, s.spans, s.separator_positions, s.padded) for s in back] == [
        (s.tokens, s.spans, s.separator_positions, s.padded) for s in seqs
    ]


def test_packed_write_rejects_wrong_length(tmp_path):
    seq = PackedSequence(tokens=[1, 2, 3], spans=[("a", 0, 2)], separator_positions=[2], padded=True)
    with pytest.raises(ValueError):
        write_packed_corpus(tmp_path / "p.ccpk", [seq], 8)


def test_packed_read_rejects_corruption(tmp_path):
    path = tmp_path / "p.ccpk"
    seqs = list(pack_sequences([("a", list(range(9)))], 8))
    write_packed_corpus(path, seqs, 8)
    data = path.read_bytes()
    path.write_bytes(data + b"\x00\x00\x00\x00")  # stream no longer % seq_len
    with pytest.raises(ModelFormatError):
        read_packed_corpus(path)
    path.write_bytes(data)
    side = tmp_path / "p.ccpk.spans.jsonl"
    lines = side.read_text(encoding="utf-8")
    side.write_text(lines + lines, encoding="utf-8")  # sidecar out of sync
    with pytest.raises(ModelFormatError):
        read_packed_corpus(path)

"""Tests for de-duplication, pair merging, and the token corpus files."""

from __future__ import annotations

from itertools import groupby

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import zipf_corpus
from reprbench.errors import CorruptionError, DataValidationError, StageError
from reprbench.quantizer import TokenSequence
from reprbench.tokenpipe import (
    MIN_PAIR_FREQ,
    BpeModel,
    apply_bpe,
    decode_bpe,
    deduplicate,
    length_reduction_ratio,
    load_bpe,
    load_token_corpus,
    save_bpe,
    save_token_corpus,
    train_bpe,
)


def naive_train_bpe(corpus, target_vocab, base_vocab):
    """Reference trainer: full pair recount after every merge.

    Same conventions as the production trainer: adjacency positions are
    counted with overlaps, best pair maximizes count with ties going to the
    smaller (left, right), merging sweeps left to right, and training stops
    once no pair reaches MIN_PAIR_FREQ.
    """
    seqs = [list(s.ids) for s in corpus]
    merges = []
    counts_log = []
    next_id = base_vocab
    while next_id < target_vocab:
        counts: dict[tuple[int, int], int] = {}
        for ids in seqs:
            for i in range(len(ids) - 1):
                pair = (ids[i], ids[i + 1])
                counts[pair] = counts.get(pair, 0) + 1
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p[0], p[1]))
        if counts[best] < MIN_PAIR_FREQ:
            break
        counts_log.append(counts[best])
        merges.append(best)
        for si, ids in enumerate(seqs):
            out = []
            i = 0
            while i < len(ids):
                if i + 1 < len(ids) and (ids[i], ids[i + 1]) == best:
                    out.append(next_id)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            seqs[si] = out
        next_id += 1
    return merges, counts_log, seqs


def exhaustive_apply(ids, merges, base_vocab):
    """Apply each merge in training order until it no longer fires."""
    ids = list(ids)
    for rank, pair in enumerate(merges):
        new_id = base_vocab + rank
        changed = True
        while changed:
            out = []
            i = 0
            changed = False
            while i < len(ids):
                if i + 1 < len(ids) and (ids[i], ids[i + 1]) == pair:
                    out.append(new_id)
                    i += 2
                    changed = True
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
    return ids


class TestDeduplicate:
    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(min_value=0, max_value=5), max_size=60))
    def test_matches_groupby(self, ids):
        seq = TokenSequence(ids=ids, stage="raw", source_id="u")
        got = deduplicate(seq)
        assert got.ids == [k for k, _ in groupby(ids)]
        assert got.stage == "dedup"
        assert got.source_id == "u"

    def test_wrong_stage(self):
        with pytest.raises(StageError):
            deduplicate(TokenSequence(ids=[1, 2], stage="dedup"))

    def test_idempotent_content(self):
        seq = TokenSequence(ids=[3, 3, 3, 1, 1, 3], stage="raw")
        once = deduplicate(seq)
        assert once.ids == [3, 1, 3]

    def test_empty(self):
        assert deduplicate(TokenSequence(ids=[], stage="raw")).ids == []


class TestTrainBpe:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_naive_recount(self, seed):
        """Incremental trainer == full-recount trainer on skewed corpora."""
        corpus = zipf_corpus(vocab=12, n_seqs=20, seq_len=40, seed=seed * 100, stage="dedup")
        model = train_bpe(corpus, target_vocab=12 + 15, base_vocab=12)
        ref_merges, ref_counts, _ = naive_train_bpe(corpus, 12 + 15, 12)
        assert model.merges == ref_merges
        assert model.merge_counts == ref_counts

    def test_simple_corpus_by_hand(self):
        # "0 1 0 1 2" twice: pair (0,1) occurs 4 times, wins first
        corpus = [
            TokenSequence(ids=[0, 1, 0, 1, 2], stage="dedup", source_id="a"),
            TokenSequence(ids=[0, 1, 0, 1, 2], stage="dedup", source_id="b"),
        ]
        model = train_bpe(corpus, target_vocab=5, base_vocab=3)
        assert model.merges[0] == (0, 1)
        assert model.merge_counts[0] == 4
        # after that merge each line is "3 3 2"; (3,3) and (3,2) both occur
        # twice and the tie goes to the smaller pair
        assert model.merges[1] == (3, 2)
        assert model.merge_counts[1] == 2

    def test_merge_counts_non_increasing(self):
        corpus = zipf_corpus(vocab=10, n_seqs=30, seq_len=50, seed=7, stage="dedup")
        model = train_bpe(corpus, target_vocab=10 + 40, base_vocab=10)
        for a, b in zip(model.merge_counts, model.merge_counts[1:]):
            assert b <= a

    def test_tie_break_lowest_pair(self):
        # (5, 0) and (1, 2) both occur exactly twice; (1, 2) is smaller
        corpus = [
            TokenSequence(ids=[5, 0, 3, 1, 2], stage="dedup", source_id="a"),
            TokenSequence(ids=[1, 2, 4, 5, 0], stage="dedup", source_id="b"),
        ]
        model = train_bpe(corpus, target_vocab=7, base_vocab=6)
        assert model.merges[0] == (1, 2)

    def test_stops_below_min_pair_freq(self):
        # every pair unique: nothing to merge
        corpus = [TokenSequence(ids=[0, 1, 2, 3, 4], stage="dedup", source_id="a")]
        model = train_bpe(corpus, target_vocab=100, base_vocab=5)
        assert model.merges == []
        assert model.exhausted

    def test_exhausted_flag_false_when_target_hit(self):
        corpus = zipf_corpus(vocab=8, n_seqs=10, seq_len=60, seed=1, stage="dedup")
        model = train_bpe(corpus, target_vocab=8 + 3, base_vocab=8)
        assert len(model.merges) == 3
        assert not model.exhausted
        assert model.vocab_size == 11

    def test_overlapping_run_counting(self):
        # alternating 0 1 0 1 0 1: (0,1) has 3 positions, (1,0) has 2
        corpus = [TokenSequence(ids=[0, 1, 0, 1, 0, 1], stage="dedup", source_id="a")]
        model = train_bpe(corpus, target_vocab=3, base_vocab=2)
        assert model.merges == [(0, 1)]
        assert model.merge_counts == [3]

    def test_same_symbol_adjacency_not_possible_after_dedup(self):
        # dedup stage forbids equal neighbors, so (x, x) never fires on real
        # input; a raw-stage corpus is rejected outright
        with pytest.raises(StageError):
            train_bpe([TokenSequence(ids=[1, 1], stage="raw")], 4, 2)

    def test_id_out_of_range(self):
        corpus = [TokenSequence(ids=[0, 9], stage="dedup", source_id="a")]
        with pytest.raises(DataValidationError):
            train_bpe(corpus, target_vocab=10, base_vocab=4)

    def test_target_must_exceed_base(self):
        corpus = [TokenSequence(ids=[0, 1], stage="dedup")]
        with pytest.raises(ValueError):
            train_bpe(corpus, target_vocab=2, base_vocab=2)

    def test_deterministic(self):
        corpus = zipf_corpus(vocab=16, n_seqs=15, seq_len=30, seed=3, stage="dedup")
        a = train_bpe(corpus, 16 + 10, 16)
        b = train_bpe(corpus, 16 + 10, 16)
        assert a == b


class TestApplyDecode:
    @settings(max_examples=40, deadline=None)
    @given(
        data=st.lists(
            st.lists(st.integers(min_value=0, max_value=7), min_size=2, max_size=40),
            min_size=1,
            max_size=8,
        ),
        probe=st.lists(st.integers(min_value=0, max_value=7), max_size=40),
    )
    def test_apply_matches_exhaustive_and_round_trips(self, data, probe):
        def dedup(ids):
            return [k for k, _ in groupby(ids)]

        corpus = [
            TokenSequence(ids=dedup(ids), stage="dedup", source_id=f"u{i}")
            for i, ids in enumerate(data)
        ]
        model = train_bpe(corpus, target_vocab=8 + 12, base_vocab=8)
        seq = TokenSequence(ids=dedup(probe), stage="dedup", source_id="probe")
        encoded = apply_bpe(seq, model)
        assert encoded.stage == "bpe"
        assert encoded.ids == exhaustive_apply(seq.ids, model.merges, 8)
        decoded = decode_bpe(encoded, model)
        assert decoded == seq

    def test_nested_merges_expand_to_base(self):
        corpus = [
            TokenSequence(ids=[0, 1, 2, 0, 1, 2, 0, 1, 2], stage="dedup", source_id="a"),
        ]
        model = train_bpe(corpus, target_vocab=6, base_vocab=3)
        # (0,1) -> 3, then (3,2) -> 4 covering three base ids, then the
        # resulting "4 4 4" line still admits (4,4) -> 5
        assert model.merges == [(0, 1), (3, 2), (4, 4)]
        assert model.expand(4) == [0, 1, 2]
        assert model.expand(5) == [0, 1, 2, 0, 1, 2]
        encoded = apply_bpe(TokenSequence(ids=[0, 1, 2], stage="dedup"), model)
        assert encoded.ids == [4]

    def test_apply_requires_dedup_stage(self):
        model = BpeModel(merges=[], base_vocab=4)
        with pytest.raises(StageError):
            apply_bpe(TokenSequence(ids=[0, 0], stage="raw"), model)

    def test_decode_requires_bpe_stage(self):
        model = BpeModel(merges=[], base_vocab=4)
        with pytest.raises(StageError):
            decode_bpe(TokenSequence(ids=[0], stage="dedup"), model)

    def test_no_merges_passes_through(self):
        model = BpeModel(merges=[], base_vocab=4)
        seq = TokenSequence(ids=[0, 1, 0], stage="dedup", source_id="u")
        out = apply_bpe(seq, model)
        assert out.ids == [0, 1, 0]
        assert out.stage == "bpe"

    def test_shorter_never_longer(self):
        corpus = zipf_corpus(vocab=9, n_seqs=12, seq_len=35, seed=5, stage="dedup")
        model = train_bpe(corpus, 9 + 8, 9)
        for seq in corpus:
            assert len(apply_bpe(seq, model)) <= len(seq)


class TestLengthRatio:
    def test_basic(self):
        before = TokenSequence(ids=[1] * 10, stage="raw", source_id="u")
        after = TokenSequence(ids=[1], stage="dedup", source_id="u")
        assert length_reduction_ratio(before, after) == 0.1

    def test_empty_before_rejected(self):
        with pytest.raises(ValueError):
            length_reduction_ratio(
                TokenSequence(ids=[], stage="raw"), TokenSequence(ids=[], stage="dedup")
            )

    def test_source_mismatch_rejected(self):
        with pytest.raises(ValueError):
            length_reduction_ratio(
                TokenSequence(ids=[1], stage="raw", source_id="a"),
                TokenSequence(ids=[1], stage="dedup", source_id="b"),
            )


class TestBpeFile:
    def test_round_trip(self, tmp_path):
        corpus = zipf_corpus(vocab=11, n_seqs=10, seq_len=40, seed=2, stage="dedup")
        model = train_bpe(corpus, 11 + 9, 11)
        p = tmp_path / "merges.bpe"
        save_bpe(model, p)
        back = load_bpe(p)
        assert back == model
        assert back.base_vocab == 11

    def test_text_format(self, tmp_path):
        model = BpeModel(merges=[(0, 1), (2, 2)], base_vocab=3)
        p = tmp_path / "m.bpe"
        save_bpe(model, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "BPE1 3"
        assert lines[1] == "0 1 3"
        assert lines[2] == "2 2 4"

    def test_gap_in_new_ids_rejected(self, tmp_path):
        p = tmp_path / "m.bpe"
        p.write_text("BPE1 3\n0 1 3\n2 2 5\n")
        with pytest.raises(CorruptionError):
            load_bpe(p)

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "m.bpe"
        p.write_text("BPE2 3\n")
        with pytest.raises(Exception):
            load_bpe(p)


class TestTokenCorpusFile:
    def test_round_trip(self, tmp_path):
        corpus = zipf_corpus(vocab=6, n_seqs=5, seq_len=12, seed=0)
        p = tmp_path / "corpus.tsv"
        save_token_corpus(corpus, p)
        assert load_token_corpus(p) == corpus

    def test_empty_ids_line(self, tmp_path):
        corpus = [TokenSequence(ids=[], stage="raw", source_id="empty")]
        p = tmp_path / "c.tsv"
        save_token_corpus(corpus, p)
        back = load_token_corpus(p)
        assert back[0].ids == []

    def test_duplicate_source_rejected(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("a\t1 2\traw\na\t3\traw\n")
        with pytest.raises(DataValidationError):
            load_token_corpus(p)

    def test_wrong_field_count_rejected(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("a\t1 2\n")
        with pytest.raises(CorruptionError):
            load_token_corpus(p)

    def test_non_integer_id_rejected(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("a\t1 x\traw\n")
        with pytest.raises(CorruptionError):
            load_token_corpus(p)

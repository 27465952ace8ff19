"""Tests for edit-distance error rates, accuracy, and corpus BLEU."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reprbench.metrics import (
    EditStats,
    accuracy,
    bleu,
    corpus_edit_stats,
    edit_stats,
    error_rate,
    normalize_text,
    per,
    wer,
)


def reference_distance(ref, hyp):
    """Independent Levenshtein distance: recursive definition with memo."""
    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
            d(i, j - 1) + 1,
            d(i - 1, j) + 1,
        )

    return d(len(ref), len(hyp))


class TestNormalizeText:
    @pytest.mark.parametrize(
        "raw,clean",
        [
            ("Hello, World!", "hello world"),
            ("  spaced\tout \n text ", "spaced out text"),
            ("don't stop", "don't stop"),
            ("semi-colon; (parens)", "semi colon parens"),
            ("UPPER lower 123", "upper lower 123"),
            ("", ""),
        ],
    )
    def test_cases(self, raw, clean):
        assert normalize_text(raw) == clean

    def test_idempotent(self):
        text = "A, messy; STRING'S here!"
        assert normalize_text(normalize_text(text)) == normalize_text(text)


class TestEditStats:
    @settings(max_examples=100, deadline=None)
    @given(
        ref=st.lists(st.sampled_from("abcde"), max_size=15),
        hyp=st.lists(st.sampled_from("abcde"), max_size=15),
    )
    def test_distance_matches_recursive_oracle(self, ref, hyp):
        stats = edit_stats(ref, hyp)
        assert stats.distance == reference_distance(ref, hyp)
        # the decomposition identity is enforced by the constructor; check the
        # complementary one for insertions against the hypothesis side
        assert stats.hits + stats.substitutions + stats.insertions == len(hyp)

    @pytest.mark.parametrize(
        "ref,hyp,expect",
        [
            ("abc", "abc", (0, 0, 0, 3)),
            ("abc", "axc", (1, 0, 0, 2)),
            ("abc", "abxc", (0, 1, 0, 3)),
            ("abc", "ac", (0, 0, 1, 2)),
            ("abc", "", (0, 0, 3, 0)),
            ("", "ab", (0, 2, 0, 0)),
            ("kitten", "sitting", (2, 1, 0, 4)),
        ],
    )
    def test_hand_worked_alignments(self, ref, hyp, expect):
        stats = edit_stats(list(ref), list(hyp))
        assert (stats.substitutions, stats.insertions, stats.deletions, stats.hits) == expect

    def test_backtrace_prefers_hits(self):
        # "aa" vs "a": one deletion, one hit; never a substitution
        stats = edit_stats(["a", "a"], ["a"])
        assert stats.hits == 1
        assert stats.deletions == 1
        assert stats.substitutions == 0

    def test_stats_addition(self):
        a = edit_stats("abc", "abc")
        b = edit_stats("xy", "yy")
        total = a + b
        assert total.ref_len == 5
        assert total.distance == a.distance + b.distance

    def test_inconsistent_stats_rejected(self):
        with pytest.raises(ValueError):
            EditStats(substitutions=1, insertions=0, deletions=0, hits=1, ref_len=5)


class TestErrorRates:
    def test_identical_corpus_zero(self):
        refs = [["the", "cat"], ["sat"]]
        assert wer(refs, refs) == 0.0
        assert per(refs, refs) == 0.0

    def test_corpus_level_pooling(self):
        # errors and lengths pool over the corpus before dividing
        refs = [["a", "b", "c", "d"], ["x", "y"]]
        hyps = [["a", "b", "c", "d"], ["x", "z"]]
        assert wer(refs, hyps) == pytest.approx(1 / 6)

    def test_rate_can_exceed_one(self):
        refs = [["a"]]
        hyps = [["b", "c", "d"]]
        assert wer(refs, hyps) == 3.0

    def test_empty_refs_rejected(self):
        with pytest.raises(ValueError):
            error_rate([[]], [["a"]])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            corpus_edit_stats([["a"]], [["a"], ["b"]])

    @settings(max_examples=40, deadline=None)
    @given(
        pairs=st.lists(
            st.tuples(
                st.lists(st.sampled_from("abc"), min_size=1, max_size=8),
                st.lists(st.sampled_from("abc"), max_size=8),
            ),
            min_size=1,
            max_size=5,
        )
    )
    def test_renaming_invariance(self, pairs):
        """Error rates depend on match structure, not on token spellings."""
        mapping = {"a": "zebra", "b": "quokka", "c": "lynx"}
        refs = [r for r, _ in pairs]
        hyps = [h for _, h in pairs]
        renamed_refs = [[mapping[t] for t in r] for r in refs]
        renamed_hyps = [[mapping[t] for t in h] for h in hyps]
        assert wer(refs, hyps) == wer(renamed_refs, renamed_hyps)


class TestAccuracy:
    def test_basic(self):
        assert accuracy(["x", "y", "z"], ["x", "n", "z"]) == pytest.approx(2 / 3)

    def test_perfect_and_zero(self):
        assert accuracy([1, 2], [1, 2]) == 1.0
        assert accuracy([1, 2], [3, 4]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy([], [])


class TestBleu:
    def test_three_sentence_worksheet(self):
        """Hand-computed corpus: every count below was tallied by hand first.

        Pair 1: hyp w1..w6, ref keeps the run w1 w2 w3 w4 and the pair w5 w6
                but separates them, so 4/5 bigrams, 2/4 trigrams, 1/3 4-grams
                survive.
        Pair 2: hyp is a clean prefix of the reference.
        Pair 3: exact match.
        """
        refs = [
            ["w1", "w2", "w3", "w4", "x", "w5", "w6"],
            ["p", "q", "r", "s"],
            ["u", "v"],
        ]
        hyps = [
            ["w1", "w2", "w3", "w4", "w5", "w6"],
            ["p", "q", "r"],
            ["u", "v"],
        ]
        # tallies: c = 11, r = 13
        # p1 = 11/11, p2 = 7/8, p3 = 3/5, p4 = 1/3; no smoothing fires
        expected = (
            100.0
            * math.exp(1.0 - 13.0 / 11.0)
            * (1.0 * (7 / 8) * (3 / 5) * (1 / 3)) ** 0.25
        )
        assert expected == pytest.approx(53.92583506906533, abs=1e-10)
        assert bleu(refs, hyps) == pytest.approx(expected, abs=1e-6)

    def test_identical_corpus_is_100(self):
        refs = [["a", "b", "c", "d", "e"], ["f", "g", "h", "i"]]
        assert bleu(refs, refs) == pytest.approx(100.0)

    def test_no_unigram_overlap_is_zero(self):
        assert bleu([["a", "b"]], [["x", "y"]]) == 0.0

    def test_empty_hypothesis_is_zero(self):
        assert bleu([["a", "b"]], [[]]) == 0.0

    def test_brevity_penalty_applied(self):
        # hyp is half the ref: precisions are perfect, only BP bites
        refs = [["a", "b", "c", "d"]]
        hyps = [["a", "b"]]
        expected = 100.0 * math.exp(1.0 - 4.0 / 2.0)
        assert bleu(refs, hyps) == pytest.approx(expected)

    def test_longer_hypothesis_no_penalty(self):
        refs = [["a", "b"]]
        hyps = [["a", "b", "c"]]
        short = bleu(refs, [["a", "b"]])
        assert short == 100.0  # same length, perfect match
        # extra token hurts precision but triggers no brevity penalty
        p1, p2 = 2 / 3, 1 / 2
        p3 = 1 / 2  # add-one smoothing over the single unmatched trigram slot
        p4 = 1.0  # no 4-gram slots exist at all
        expected = 100.0 * (p1 * p2 * p3 * p4) ** 0.25
        assert bleu(refs, hyps) == pytest.approx(expected)

    def test_smoothing_on_zero_higher_order(self):
        # unigrams overlap but no bigram does; p2..p4 fall back to 1/(total+1)
        refs = [["a", "x", "b", "y"]]
        hyps = [["a", "b"]]
        p1 = 2 / 2
        p2 = 1 / 2  # 1 possible bigram, unmatched
        p3 = p4 = 1.0  # no higher-order slots at all
        expected = 100.0 * math.exp(1.0 - 4.0 / 2.0) * (p1 * p2 * p3 * p4) ** 0.25
        assert bleu(refs, hyps) == pytest.approx(expected)

    def test_clipping_counts(self):
        # "the the the" against a ref with a single "the": clipped to 1
        refs = [["the", "cat"]]
        hyps = [["the", "the", "the"]]
        got = bleu(refs, hyps, max_n=1)
        assert got == pytest.approx(100.0 * (1 / 3))

    @settings(max_examples=30, deadline=None)
    @given(
        pairs=st.lists(
            st.tuples(
                st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=10),
                st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=10),
            ),
            min_size=1,
            max_size=4,
        ),
        offset=st.integers(min_value=1, max_value=1000),
    )
    def test_renaming_invariance(self, pairs, offset):
        refs = [r for r, _ in pairs]
        hyps = [h for _, h in pairs]
        assert bleu(refs, hyps) == pytest.approx(
            bleu(
                [[t + offset for t in r] for r in refs],
                [[t + offset for t in h] for h in hyps],
            )
        )

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bleu([["a"]], [])

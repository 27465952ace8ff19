"""Corpus scoring: edit-distance error rates, accuracy, corpus BLEU.

WER and PER share one engine: per-pair Levenshtein alignment with unit costs,
aggregated over the corpus as (S + D + I) / total reference length. Alignment
backtraces deterministically, preferring hit, then substitution, then
insertion, then deletion, so the S/D/I decomposition is stable even when
several alignments tie.

BLEU is corpus-level with clipped n-gram precisions up to max_n, a geometric
mean, and brevity penalty exp(1 - r/c) when c < r. Zero precisions for n >= 2
take add-one smoothing (1 / (total + 1)); a zero unigram precision makes the
whole score 0.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_PUNCT_RE = re.compile(r"[^\w\s']", flags=re.UNICODE)
_WS_RE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation except apostrophes, collapse whitespace."""
    text = _PUNCT_RE.sub(" ", text.lower())
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class EditStats:
    """Alignment decomposition; substitutions + deletions + hits == ref_len."""

    substitutions: int
    insertions: int
    deletions: int
    hits: int
    ref_len: int

    def __post_init__(self) -> None:
        if self.substitutions + self.deletions + self.hits != self.ref_len:
            raise ValueError(
                f"inconsistent stats: S={self.substitutions} D={self.deletions} "
                f"H={self.hits} but ref_len={self.ref_len}"
            )

    def __add__(self, other: "EditStats") -> "EditStats":
        return EditStats(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.hits + other.hits,
            self.ref_len + other.ref_len,
        )

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_stats(ref: Sequence, hyp: Sequence) -> EditStats:
    """Levenshtein-align one pair and count S/I/D/H."""
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, above = dist[i], dist[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            sub = above[j - 1] + (r != hyp[j - 1])
            ins = row[j - 1] + 1
            dele = above[j] + 1
            row[j] = sub if sub <= ins and sub <= dele else min(ins, dele)
    s = ins = dele = hits = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            hits += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            s += 1
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dele += 1
            i -= 1
    return EditStats(s, ins, dele, hits, n)


def corpus_edit_stats(refs: Sequence[Sequence], hyps: Sequence[Sequence]) -> EditStats:
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    total = EditStats(0, 0, 0, 0, 0)
    for ref, hyp in zip(refs, hyps):
        total = total + edit_stats(ref, hyp)
    return total


def error_rate(refs: Sequence[Sequence], hyps: Sequence[Sequence]) -> float:
    """(S + D + I) / total reference length over the whole corpus."""
    stats = corpus_edit_stats(refs, hyps)
    if stats.ref_len == 0:
        raise ValueError("total reference length is zero")
    return stats.distance / stats.ref_len


def wer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> float:
    """Word error rate over pre-tokenized word sequences."""
    return error_rate(refs, hyps)


def per(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> float:
    """Phoneme error rate; same alignment as wer over a phoneme alphabet."""
    return error_rate(refs, hyps)


def accuracy(refs: Sequence, hyps: Sequence) -> float:
    """Fraction of positions where hyp matches ref exactly."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("empty input")
    return sum(r == h for r, h in zip(refs, hyps)) / len(refs)


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(refs: Sequence[Sequence], hyps: Sequence[Sequence], max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100], single reference per hypothesis."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("empty input")
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for ref, hyp in zip(refs, hyps):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            clipped[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )
    if hyp_len == 0 or clipped[0] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        if clipped[n - 1] > 0:
            p = clipped[n - 1] / totals[n - 1]
        else:
            p = 1.0 / (totals[n - 1] + 1)
        log_sum += math.log(p)
    geo_mean = math.exp(log_sum / max_n)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * geo_mean

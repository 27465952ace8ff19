"""Shared fixtures and small data builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from reprbench.quantizer import TokenSequence


def zipf_ids(vocab: int, n: int, seed: int = 0, exponent: float = 1.2) -> list[int]:
    """Draw n ids from a Zipf-like distribution over range(vocab).

    Id 0 is the most frequent head token. Useful wherever a skewed
    frequency profile matters (BPE training, frequency reports).
    """
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, vocab + 1) ** exponent
    weights /= weights.sum()
    return [int(i) for i in rng.choice(vocab, size=n, p=weights)]


def zipf_corpus(
    vocab: int,
    n_seqs: int,
    seq_len: int,
    seed: int = 0,
    stage: str = "raw",
) -> list[TokenSequence]:
    out = []
    for i in range(n_seqs):
        ids = zipf_ids(vocab, seq_len, seed=seed + i)
        if stage == "dedup":
            ids = [x for j, x in enumerate(ids) if j == 0 or x != ids[j - 1]]
        out.append(TokenSequence(ids=ids, stage=stage, source_id=f"utt{i:03d}"))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

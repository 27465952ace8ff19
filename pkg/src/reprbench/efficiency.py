"""Bit-rate and data-size accounting, token-frequency reports, tail pruning.

Bit-rate of a discrete stream: R = log2(V) * C * Rs with V the vocabulary
size, C the number of codebooks emitting in parallel, and Rs the per-codebook
emission rate in codes per second. Two bit modes are supported: the exact
real-valued log2, and the integer width ceil(log2 V) an implementation would
actually store per code.

The data-size table mirrors a stage-by-stage storage comparison: the first
row is the continuous baseline (bit_depth * D * frame_rate * t), later rows
are either absolute rates or measured shrink ratios applied to the previous
row. Frequency reports rank ids by count and cut the tail at a cumulative
threshold; pruning replaces each dropped id with the retained id whose
centroid is nearest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import StageError
from .quantizer import Codebook, TokenSequence, nearest_centroids

BIT_MODES = ("exact_log2", "integer_width")


@dataclass(frozen=True)
class BitRateSpec:
    vocab: int
    codebooks: int
    emission_rate: float | Fraction
    bit_mode: str = "exact_log2"

    def __post_init__(self) -> None:
        if self.vocab < 2:
            raise ValueError(f"vocab must be >= 2, got {self.vocab}")
        if self.codebooks < 1:
            raise ValueError(f"codebooks must be >= 1, got {self.codebooks}")
        if self.emission_rate <= 0:
            raise ValueError(f"emission_rate must be > 0, got {self.emission_rate}")
        if self.bit_mode not in BIT_MODES:
            raise ValueError(f"bit_mode must be one of {BIT_MODES}, got {self.bit_mode!r}")


def bits_per_code(vocab: int, bit_mode: str = "exact_log2") -> float:
    if vocab < 2:
        raise ValueError(f"vocab must be >= 2, got {vocab}")
    if bit_mode == "exact_log2":
        return math.log2(vocab)
    if bit_mode == "integer_width":
        return float((vocab - 1).bit_length())
    raise ValueError(f"bit_mode must be one of {BIT_MODES}, got {bit_mode!r}")


def bit_rate(spec: BitRateSpec) -> float:
    """Bits per second for one discrete stream."""
    return bits_per_code(spec.vocab, spec.bit_mode) * spec.codebooks * float(spec.emission_rate)


@dataclass(frozen=True)
class RateStage:
    """A table row defined by an absolute rate: bits_per_code * codes_per_second * t."""

    name: str
    bits_per_code: float
    codes_per_second: float

    def __post_init__(self) -> None:
        if self.bits_per_code <= 0 or self.codes_per_second <= 0:
            raise ValueError(f"{self.name}: rates must be > 0")


@dataclass(frozen=True)
class RatioStage:
    """A table row defined by a measured shrink ratio against the previous row."""

    name: str
    ratio: float

    def __post_init__(self) -> None:
        if not 0 < self.ratio:
            raise ValueError(f"{self.name}: ratio must be > 0")


@dataclass(frozen=True)
class TableRow:
    stage: str
    bits: float
    reduction_ratio: float | None


def data_size_table(
    t_seconds: float,
    continuous: tuple[float, int, float],
    stages: list[RateStage | RatioStage],
) -> list[TableRow]:
    """Stage-by-stage storage table; ratios are row over previous row.

    `continuous` is (bit_depth, feature_dim, frame_rate) and becomes the
    first row, whose ratio cell is empty.
    """
    if t_seconds <= 0:
        raise ValueError(f"t_seconds must be > 0, got {t_seconds}")
    if not stages:
        raise ValueError("stage list is empty")
    bit_depth, d, frame_rate = continuous
    if bit_depth <= 0 or d < 1 or frame_rate <= 0:
        raise ValueError(f"bad continuous spec {continuous}")
    rows = [TableRow("continuous", float(bit_depth) * d * frame_rate * t_seconds, None)]
    for stage in stages:
        prev = rows[-1].bits
        if isinstance(stage, RateStage):
            bits = stage.bits_per_code * stage.codes_per_second * t_seconds
            rows.append(TableRow(stage.name, bits, bits / prev))
        elif isinstance(stage, RatioStage):
            rows.append(TableRow(stage.name, prev * stage.ratio, stage.ratio))
        else:
            raise TypeError(f"unsupported stage spec {stage!r}")
    return rows


def render_data_size_tsv(rows: list[TableRow]) -> str:
    lines = ["stage\tbits\treduction_ratio"]
    for row in rows:
        ratio = "" if row.reduction_ratio is None else repr(row.reduction_ratio)
        lines.append(f"{row.stage}\t{row.bits!r}\t{ratio}")
    return "\n".join(lines) + "\n"


@dataclass(eq=False)
class TokenFrequencyReport:
    """Per-id counts ranked by frequency with a cumulative-threshold tail cut.

    Ranking sorts by count descending, then id ascending. The cutoff rank is
    the first rank whose cumulative fraction reaches the threshold; every id
    ranked after it is under-trained.
    """

    counts: np.ndarray
    total: int
    sorted_ids: np.ndarray
    cumulative: np.ndarray
    under_trained: set[int]
    threshold: float
    cutoff_rank: int = field(default=0)

    @property
    def vocab_size(self) -> int:
        return len(self.counts)


def token_frequency_report(
    corpus: list[TokenSequence],
    cumulative_threshold: float,
    vocab_size: int | None = None,
) -> TokenFrequencyReport:
    """Count ids across the corpus and split off the under-trained tail.

    vocab_size fixes the id range so zero-count ids appear in the ranking;
    it defaults to max id + 1.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if not 0 < cumulative_threshold < 1:
        raise ValueError(f"threshold must be in (0,1), got {cumulative_threshold}")
    stages = {seq.stage for seq in corpus}
    if len(stages) > 1:
        raise StageError(f"corpus mixes stages {sorted(stages)}")
    all_ids = [i for seq in corpus for i in seq.ids]
    if not all_ids:
        raise ValueError("corpus contains no tokens")
    max_id = max(all_ids)
    if vocab_size is None:
        vocab_size = max_id + 1
    elif max_id >= vocab_size:
        raise ValueError(f"id {max_id} outside declared vocab_size {vocab_size}")
    counts = np.bincount(np.asarray(all_ids, dtype=np.int64), minlength=vocab_size)
    total = int(counts.sum())
    # descending count, ascending id: sort ids by (-count, id)
    order = np.lexsort((np.arange(vocab_size), -counts))
    cumulative = np.cumsum(counts[order]) / total
    cutoff = int(np.argmax(cumulative >= cumulative_threshold))
    under = set(int(i) for i in order[cutoff + 1 :])
    return TokenFrequencyReport(
        counts=counts,
        total=total,
        sorted_ids=order,
        cumulative=cumulative,
        under_trained=under,
        threshold=cumulative_threshold,
        cutoff_rank=cutoff,
    )


def render_frequency_tsv(report: TokenFrequencyReport) -> str:
    lines = ["rank\tid\tcount\tfraction\tcumulative\tunder_trained"]
    for rank, token_id in enumerate(report.sorted_ids):
        token_id = int(token_id)
        count = int(report.counts[token_id])
        fraction = count / report.total
        flag = "1" if token_id in report.under_trained else "0"
        cumulative = float(report.cumulative[rank])
        lines.append(
            f"{rank}\t{token_id}\t{count}\t{fraction!r}\t{cumulative!r}\t{flag}"
        )
    return "\n".join(lines) + "\n"


def frequency_summary(report: TokenFrequencyReport) -> dict:
    """Compact JSON-ready view of a frequency report."""
    return {
        "vocab_size": report.vocab_size,
        "total_tokens": report.total,
        "threshold": report.threshold,
        "cutoff_rank": report.cutoff_rank,
        "n_under_trained": len(report.under_trained),
        "under_trained_fraction": len(report.under_trained) / report.vocab_size,
    }


def prune_under_trained(
    corpus: list[TokenSequence],
    cb: Codebook,
    prune_fraction: float,
) -> tuple[list[TokenSequence], dict[int, int]]:
    """Drop the least-frequent ids and remap occurrences to nearest centroids.

    floor(prune_fraction * k) ids are pruned, least frequent first (ties:
    higher id pruned first, mirroring the frequency ranking). Every pruned
    occurrence becomes the retained id whose centroid is closest to the pruned
    id's centroid, so sequence lengths and timing are preserved. Returns the
    remapped corpus and the pruned->retained table.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if not 0 < prune_fraction < 1:
        raise ValueError(f"prune_fraction must be in (0,1), got {prune_fraction}")
    for seq in corpus:
        if seq.stage != "raw":
            raise StageError(f"pruning runs before dedup/BPE, got stage {seq.stage!r}")
        for i in seq.ids:
            if i >= cb.k:
                raise ValueError(f"id {i} outside codebook of size {cb.k}")
    n_prune = int(prune_fraction * cb.k)
    if n_prune == 0:
        return [TokenSequence(list(s.ids), "raw", s.source_id) for s in corpus], {}
    if n_prune >= cb.k:
        raise ValueError(f"pruning {n_prune} of {cb.k} ids would empty the vocabulary")
    counts = np.zeros(cb.k, dtype=np.int64)
    for seq in corpus:
        if seq.ids:
            counts += np.bincount(np.asarray(seq.ids, dtype=np.int64), minlength=cb.k)
    order = np.lexsort((np.arange(cb.k), -counts))  # frequency ranking, head first
    pruned = [int(i) for i in order[cb.k - n_prune :]]
    retained = np.asarray(sorted(int(i) for i in order[: cb.k - n_prune]), dtype=np.int64)
    nearest, _ = nearest_centroids(cb.centroids[pruned], cb.centroids[retained])
    remap = {p: int(retained[n]) for p, n in zip(pruned, nearest)}
    out = []
    for seq in corpus:
        out.append(
            TokenSequence(
                ids=[remap.get(i, i) for i in seq.ids],
                stage="raw",
                source_id=seq.source_id,
            )
        )
    return out, remap

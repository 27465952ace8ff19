"""K-means codebooks over feature frames and nearest-centroid token assignment.

Training runs Lloyd's algorithm with k-means++ initialization, entirely in
float64; the stored codebook is float32 and the reported inertia is recomputed
against those float32 centroids so it matches what :func:`inertia` returns for
the saved artifact. Distances are squared Euclidean, computed blockwise via
the ||x||^2 - 2 x.c + ||c||^2 expansion with a clamp at zero.

Codebook file format "SCB1", little-endian:

    magic "SCB1", u32 version=1, u32 k, u32 d,
    k*d binary32 row-major centroids,
    u32 metadata byte length, then that many UTF-8 bytes of "key=value" lines.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, DataValidationError, FormatError
from .feature_io import FeatureSequence

SCB_MAGIC = b"SCB1"
SCB_VERSION = 1
_SCB_HEADER = struct.Struct("<4sIII")

STAGES = ("raw", "dedup", "bpe")

# cap on rows*k per distance block, keeps peak memory around 32 MB of float64
_BLOCK_ELEMS = 4_000_000


@dataclass(eq=False)
class TokenSequence:
    """Integer id sequence at a known pipeline stage.

    Stages: "raw" (one id per frame), "dedup" (adjacent duplicates collapsed),
    "bpe" (merged meta tokens). Range checks against a codebook or BPE vocab
    happen at the operations that need them.
    """

    ids: list[int]
    stage: str
    source_id: str = ""

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        self.ids = [int(i) for i in self.ids]
        for pos, i in enumerate(self.ids):
            if i < 0:
                raise DataValidationError(f"negative id {i} at position {pos}")
        if self.stage == "dedup":
            for pos in range(1, len(self.ids)):
                if self.ids[pos] == self.ids[pos - 1]:
                    raise DataValidationError(
                        f"dedup sequence has equal adjacent ids at position {pos}"
                    )

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenSequence):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.stage == other.stage
            and self.source_id == other.source_id
        )


@dataclass(eq=False)
class Codebook:
    """Trained centroid set; immutable once built, safe to share across threads."""

    centroids: np.ndarray
    trained_inertia: float
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError(f"centroids must be k x d with k >= 1, got {self.centroids.shape}")
        if not np.isfinite(self.centroids).all():
            raise DataValidationError("centroids contain non-finite values")
        if self.trained_inertia < 0:
            raise DataValidationError(f"inertia must be >= 0, got {self.trained_inertia}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.centroids.shape == other.centroids.shape
            and np.array_equal(self.centroids, other.centroids)
            and self.trained_inertia == other.trained_inertia
            and self.meta == other.meta
        )


def nearest_centroids(frames: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (nearest centroid index, squared distance), lowest index on ties.

    Works in float64 regardless of input dtype, blockwise over frames.
    """
    frames = np.asarray(frames, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if frames.ndim != 2 or centroids.ndim != 2:
        raise ValueError("frames and centroids must be 2-D")
    if frames.shape[1] != centroids.shape[1]:
        raise ValueError(
            f"dimension mismatch: frames D={frames.shape[1]}, centroids D={centroids.shape[1]}"
        )
    n, k = frames.shape[0], centroids.shape[0]
    ids = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c_sq = np.einsum("kd,kd->k", centroids, centroids)
    step = max(1, _BLOCK_ELEMS // max(k, 1))
    for lo in range(0, n, step):
        block = frames[lo : lo + step]
        d2 = (
            np.einsum("nd,nd->n", block, block)[:, None]
            - 2.0 * block @ centroids.T
            + c_sq[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        idx = np.argmin(d2, axis=1)  # argmin takes the first minimum: lowest index
        ids[lo : lo + step] = idx
        best[lo : lo + step] = d2[np.arange(len(block)), idx]
    return ids, best


def inertia(frames: np.ndarray, cb: Codebook) -> float:
    """Sum of squared distances from each frame to its nearest centroid."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
    if frames.shape[0] == 0:
        return 0.0
    _, d2 = nearest_centroids(frames, cb.centroids)
    return float(d2.sum())


def quantize(seq: FeatureSequence, cb: Codebook) -> TokenSequence:
    """Map each frame to the id of its nearest centroid (stage "raw")."""
    if seq.d != cb.d:
        raise ValueError(f"dimension mismatch: features D={seq.d}, codebook d={cb.d}")
    if seq.t == 0:
        return TokenSequence(ids=[], stage="raw", source_id=seq.source_id)
    ids, _ = nearest_centroids(seq.frames, cb.centroids)
    return TokenSequence(ids=ids.tolist(), stage="raw", source_id=seq.source_id)


def kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest D^2-sampled."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = data[first]
    d2 = np.maximum(np.einsum("nd,nd->n", data - centers[0], data - centers[0]), 0.0)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen center; any pick is as good
            idx = int(rng.integers(n))
        centers[i] = data[idx]
        diff = data - centers[i]
        np.minimum(d2, np.maximum(np.einsum("nd,nd->n", diff, diff), 0.0), out=d2)
    return centers


def _repair_empty(
    centroids: np.ndarray, counts: np.ndarray, d2: np.ndarray, data: np.ndarray
) -> None:
    """Reseed each empty centroid to the point currently farthest from its centroid.

    Mutates centroids in place; each reseed strictly lowers inertia because the
    chosen point's own distance drops to zero.
    """
    d2 = d2.copy()
    for cluster in np.flatnonzero(counts == 0):
        far = int(np.argmax(d2))
        centroids[cluster] = data[far]
        d2[far] = -1.0  # keep later empties from grabbing the same point


def lloyd(
    data: np.ndarray,
    init_centroids: np.ndarray,
    max_iters: int,
    tol: float,
) -> tuple[np.ndarray, list[float]]:
    """Lloyd iterations from a given start; returns (centroids, inertia trace).

    The trace holds one inertia per assignment against the returned history of
    centroids and is non-increasing. The last entry is the inertia of the
    returned centroids.
    """
    k = init_centroids.shape[0]
    centroids = np.array(init_centroids, dtype=np.float64)
    trace: list[float] = []
    for _ in range(max_iters):
        ids, d2 = nearest_centroids(data, centroids)
        inert = float(d2.sum())
        if trace and inert > trace[-1]:
            # float round-off nudged us uphill; keep the previous solution
            centroids = prev_centroids
            break
        trace.append(inert)
        prev_centroids = centroids
        if len(trace) >= 2:
            prev = trace[-2]
            if prev == 0.0 or (prev - inert) < tol * prev:
                break
        if inert == 0.0:
            break
        counts = np.bincount(ids, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, ids, data)
        centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centroids)
        if (counts == 0).any():
            _repair_empty(centroids, counts, d2, data)
    else:
        ids, d2 = nearest_centroids(data, centroids)
        inert = float(d2.sum())
        if trace and inert > trace[-1]:
            centroids = prev_centroids
        else:
            trace.append(inert)
    return centroids, trace


def _enforce_coverage(centroids: np.ndarray, data: np.ndarray, k: int) -> np.ndarray:
    """Reassign-and-repair until every cluster owns a point or repairs run out.

    Duplicate centroids leave their higher-index twin empty (ties go to the
    lowest index); reseeding fixes that whenever the data has enough distinct
    points. Bounded at k rounds; every repair strictly decreases inertia.
    """
    for _ in range(k):
        ids, d2 = nearest_centroids(data, centroids)
        counts = np.bincount(ids, minlength=k)
        empties = counts == 0
        if not empties.any():
            break
        if (d2 > 0).sum() < empties.sum():
            break  # fewer distinct leftover points than holes; nothing more to do
        _repair_empty(centroids, counts, d2, data)
    return centroids


@dataclass
class KMeansResult:
    codebook: Codebook
    inertia_trace: list[float]


def fit_kmeans(
    frames: np.ndarray,
    k: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    frame_stride: int = 1,
    meta: dict[str, str] | None = None,
) -> KMeansResult:
    """Fit a k-centroid codebook to frames (n x D); keeps the inertia trace.

    frame_stride > 1 trains on every stride-th frame, a deliberate knob for
    large dumps; the default uses everything. Deterministic for a fixed seed.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError(f"frames must be a non-empty n x D matrix, got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise DataValidationError("training frames contain non-finite values")
    if frame_stride < 1:
        raise ValueError(f"frame_stride must be >= 1, got {frame_stride}")
    data = np.ascontiguousarray(frames[::frame_stride], dtype=np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > data.shape[0]:
        raise ValueError(f"k={k} exceeds the {data.shape[0]} training frames")
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_init(data, k, rng)
    centroids, trace = lloyd(data, centroids, max_iters=max_iters, tol=tol)
    assert all(b <= a for a, b in zip(trace, trace[1:])), "inertia trace increased"
    centroids = _enforce_coverage(centroids, data, k)
    final = centroids.astype(np.float32)
    # report the inertia of what we actually store (float32), not the float64 fit
    _, d2 = nearest_centroids(data, final)
    cb_meta = {
        "iterations": str(len(trace)),
        "seed": str(seed),
    }
    if frame_stride != 1:
        cb_meta["frame_stride"] = str(frame_stride)
    if meta:
        cb_meta.update(meta)
    codebook = Codebook(centroids=final, trained_inertia=float(d2.sum()), meta=cb_meta)
    return KMeansResult(codebook=codebook, inertia_trace=trace)


def train_kmeans(
    frames: np.ndarray,
    k: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    frame_stride: int = 1,
    meta: dict[str, str] | None = None,
) -> Codebook:
    """fit_kmeans without the trace; see there for parameters."""
    return fit_kmeans(
        frames, k, max_iters=max_iters, tol=tol, seed=seed,
        frame_stride=frame_stride, meta=meta,
    ).codebook


def save_codebook(cb: Codebook, path: str | Path) -> None:
    """Write SCB1; loading back gives an equal Codebook, bytes included."""
    meta = dict(cb.meta)
    meta["trained_inertia"] = repr(cb.trained_inertia)
    for key, value in meta.items():
        if "=" in key or "\n" in key or "\n" in value:
            raise DataValidationError(f"metadata key/value not representable: {key!r}={value!r}")
    meta_blob = "".join(f"{key}={meta[key]}\n" for key in sorted(meta)).encode("utf-8")
    body = np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_SCB_HEADER.pack(SCB_MAGIC, SCB_VERSION, cb.k, cb.d))
        fh.write(body)
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != SCB_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {SCB_MAGIC!r}")
    if len(raw) < _SCB_HEADER.size:
        raise CorruptionError(f"{path}: truncated header ({len(raw)} bytes)")
    _, version, k, d = _SCB_HEADER.unpack_from(raw)
    if version != SCB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if k < 1 or d < 1:
        raise DataValidationError(f"{path}: header k={k}, d={d} out of range")
    body_end = _SCB_HEADER.size + k * d * 4
    if len(raw) < body_end + 4:
        raise CorruptionError(f"{path}: truncated centroid block")
    centroids = np.frombuffer(raw[_SCB_HEADER.size : body_end], dtype="<f4").reshape(k, d)
    (meta_len,) = struct.unpack_from("<I", raw, body_end)
    meta_blob = raw[body_end + 4 :]
    if len(meta_blob) != meta_len:
        raise CorruptionError(
            f"{path}: metadata is {len(meta_blob)} bytes, header says {meta_len}"
        )
    meta: dict[str, str] = {}
    for lineno, line in enumerate(meta_blob.decode("utf-8").splitlines(), 1):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise CorruptionError(f"{path}: bad metadata line {lineno}: {line!r}")
        meta[key] = value
    inertia_text = meta.pop("trained_inertia", "0.0")
    try:
        trained_inertia = float(inertia_text)
    except ValueError as exc:
        raise CorruptionError(f"{path}: bad trained_inertia {inertia_text!r}") from exc
    return Codebook(centroids=centroids, trained_inertia=trained_inertia, meta=meta)

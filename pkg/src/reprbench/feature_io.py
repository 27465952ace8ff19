"""On-disk feature container (SRF1), manifests, and synthetic test features.

SRF1 layout, little-endian throughout:

    offset  size  field
    0       4     magic "SRF1"
    4       4     u32 version (= 1)
    8       4     u32 T (frame count)
    12      4     u32 D (feature dimensionality)
    16      4     u32 layer_id
    20      4     u32 frame_rate numerator (Hz)
    24      4     u32 frame_rate denominator
    28      T*D*4 IEEE-754 binary32 values, row-major (frame-major)

The frame rate is stored as a rational so both the 25 Hz and 50 Hz readings
of SSL frame rates can be represented exactly. The file carries no utterance
identifier; source ids live in the manifest, and the loader falls back to the
file name stem.

Manifests are UTF-8 TSV: source_id <TAB> path <TAB> transcript <TAB> label,
one row per utterance, empty trailing fields allowed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import CorruptionError, DataValidationError, FormatError

SRF_MAGIC = b"SRF1"
SRF_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")
HEADER_SIZE = _HEADER.size  # 28 bytes


def _first_nonfinite(frames: np.ndarray) -> tuple[int, int] | None:
    finite = np.isfinite(frames)
    if finite.all():
        return None
    flat = int(np.flatnonzero(~finite.ravel())[0])
    d = frames.shape[1] if frames.ndim == 2 and frames.shape[1] else 1
    return divmod(flat, d)


@dataclass(eq=False)
class FeatureSequence:
    """A T x D float32 frame matrix with frame rate and layer provenance."""

    frames: np.ndarray
    frame_rate_hz: Fraction
    layer_id: int = 0
    source_id: str = ""

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {self.frames.shape}")
        if self.frames.shape[1] < 1:
            raise DataValidationError("feature dimensionality must be >= 1")
        bad = _first_nonfinite(self.frames)
        if bad is not None:
            raise DataValidationError(
                f"non-finite value at frame {bad[0]}, dim {bad[1]}"
            )
        self.frame_rate_hz = Fraction(self.frame_rate_hz)
        if self.frame_rate_hz <= 0:
            raise DataValidationError(f"frame rate must be > 0, got {self.frame_rate_hz}")
        if self.layer_id < 0:
            raise DataValidationError(f"layer_id must be >= 0, got {self.layer_id}")

    @property
    def t(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return (
            self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
            and self.frame_rate_hz == other.frame_rate_hz
            and self.layer_id == other.layer_id
            and self.source_id == other.source_id
        )


def store_features(seq: FeatureSequence, path: str | Path) -> None:
    """Write *seq* to *path* in SRF1 format (bit-exact, load_features inverts)."""
    path = Path(path)
    rate = seq.frame_rate_hz
    header = _HEADER.pack(
        SRF_MAGIC,
        SRF_VERSION,
        seq.t,
        seq.d,
        seq.layer_id,
        rate.numerator,
        rate.denominator,
    )
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def load_features(path: str | Path, source_id: str | None = None) -> FeatureSequence:
    """Read an SRF1 file.

    The source id is not part of the format; pass it explicitly (e.g. from a
    manifest) or the file name stem is used.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != SRF_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {SRF_MAGIC!r}")
    if len(raw) < HEADER_SIZE:
        raise CorruptionError(f"{path}: truncated header ({len(raw)} bytes)")
    _, version, t, d, layer_id, rate_num, rate_den = _HEADER.unpack_from(raw)
    if version != SRF_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if d < 1:
        raise DataValidationError(f"{path}: header D must be >= 1, got {d}")
    if rate_num == 0 or rate_den == 0:
        raise DataValidationError(f"{path}: invalid frame rate {rate_num}/{rate_den}")
    expected = t * d * 4
    payload = raw[HEADER_SIZE:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    bad = _first_nonfinite(frames.reshape(t, d) if t else frames.reshape(0, d))
    if bad is not None:
        raise DataValidationError(
            f"{path}: non-finite value at frame {bad[0]}, dim {bad[1]}"
        )
    return FeatureSequence(
        frames=frames,
        frame_rate_hz=Fraction(rate_num, rate_den),
        layer_id=layer_id,
        source_id=path.stem if source_id is None else source_id,
    )


def feature_path(directory: str | Path, source_id: str, layer_id: int) -> Path:
    """Conventional file name for one (utterance, layer) dump."""
    return Path(directory) / f"{source_id}.layer{layer_id}.srf"


def split_layer_suffix(stem: str) -> tuple[str, int | None]:
    """Split a ``<source_id>.layer<k>`` file stem; returns (stem, None) otherwise."""
    base, dot, suffix = stem.rpartition(".")
    if dot and suffix.startswith("layer") and suffix[5:].isdigit():
        return base, int(suffix[5:])
    return stem, None


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    path: str
    transcript: str = ""
    label: str = ""


@dataclass
class Manifest:
    """Binds utterances to feature files, transcripts, and labels."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.source_id in seen:
                raise DataValidationError(f"duplicate source_id {e.source_id!r}")
            seen.add(e.source_id)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.source_id: e for e in self.entries}

    def resolve_path(self, entry: ManifestEntry, base: str | Path) -> Path:
        """Resolve an entry path relative to the manifest location."""
        p = Path(entry.path)
        return p if p.is_absolute() else Path(base) / p


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    lines = []
    for e in manifest.entries:
        for text, name in ((e.source_id, "source_id"), (e.path, "path"),
                           (e.transcript, "transcript"), (e.label, "label")):
            if "\t" in text or "\n" in text:
                raise DataValidationError(f"{name} contains tab/newline: {text!r}")
        lines.append(f"{e.source_id}\t{e.path}\t{e.transcript}\t{e.label}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) > 4 or not parts[0]:
            raise DataValidationError(f"{path}:{lineno}: malformed manifest row")
        parts += [""] * (4 - len(parts))
        entries.append(ManifestEntry(*parts))
    return Manifest(entries)


def synth_mode_centers(d: int, n_modes: int, seed: int) -> np.ndarray:
    """Mode centers used by synth_features for the same (d, n_modes, seed)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_modes, d))


def synth_features(
    t: int,
    d: int,
    n_modes: int,
    noise: float,
    seed: int,
    frame_rate_hz: Fraction | int = 50,
    layer_id: int = 0,
    source_id: str | None = None,
) -> FeatureSequence:
    """Deterministic test features: frames scattered around Gaussian mode centers.

    With noise = 0 every frame sits exactly on one of the n_modes centers, so
    k-means with k = n_modes has recoverable structure by construction.
    """
    if t < 0 or d < 1 or n_modes < 1:
        raise ValueError("need t >= 0, d >= 1, n_modes >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_modes, d))  # matches synth_mode_centers
    assignment = rng.integers(0, n_modes, size=t)
    frames = centers[assignment]
    if noise > 0:
        frames = frames + noise * rng.standard_normal((t, d))
    return FeatureSequence(
        frames=frames.astype(np.float32),
        frame_rate_hz=Fraction(frame_rate_hz),
        layer_id=layer_id,
        source_id=source_id if source_id is not None else f"synth-{seed}-{t}x{d}",
    )

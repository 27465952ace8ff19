"""Writers for the SRF1 feature format and the manifest TSV.

This is the boundary with the downstream analysis toolkit, which has its own
reader. The format is duplicated here on purpose: the two packages share
bytes, not code. Layout:

    "SRF1" | u32 version=1 | u32 T | u32 D | u32 layer_id
           | u32 rate_numerator | u32 rate_denominator
    then T*D float32 values, little-endian, row-major.

The manifest is UTF-8 TSV, one row per utterance:
source_id, path, transcript, label; empty trailing fields allowed and paths
relative to the manifest file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ArgumentError

MAGIC = b"SRF1"
VERSION = 1
HEADER = struct.Struct("<4sIIIIII")


def write_srf(
    path: str | Path,
    frames: np.ndarray,
    frame_rate_hz: Fraction | int,
    layer_id: int,
) -> None:
    """Write one T x D float32 matrix; refuses data the reader would reject."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise ArgumentError(f"frames must be 2-D, got shape {frames.shape}")
    t, d = frames.shape
    if d < 1:
        raise ArgumentError("feature dimension must be >= 1")
    if not np.isfinite(frames).all():
        raise ArgumentError(f"{path}: refusing to write non-finite values")
    if layer_id < 0:
        raise ArgumentError(f"layer_id must be >= 0, got {layer_id}")
    rate = Fraction(frame_rate_hz)
    if rate <= 0:
        raise ArgumentError(f"frame rate must be positive, got {rate}")
    header = HEADER.pack(
        MAGIC, VERSION, t, d, layer_id, rate.numerator, rate.denominator
    )
    Path(path).write_bytes(header + frames.tobytes(order="C"))


@dataclass(frozen=True)
class ManifestRow:
    source_id: str
    path: str
    transcript: str = ""
    label: str = ""


def write_manifest(rows: list[ManifestRow], path: str | Path) -> None:
    seen: set[str] = set()
    lines = []
    for row in rows:
        if row.source_id in seen:
            raise ArgumentError(f"duplicate source_id {row.source_id!r} in manifest")
        seen.add(row.source_id)
        for field in (row.source_id, row.path, row.transcript, row.label):
            if "\t" in field or "\n" in field:
                raise ArgumentError(
                    f"manifest field contains a tab or newline: {field!r}"
                )
        lines.append("\t".join((row.source_id, row.path, row.transcript, row.label)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

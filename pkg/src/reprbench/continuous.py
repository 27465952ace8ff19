"""Continuous-feature pipeline: frame stacking and a single linear adapter.

Stacking concatenates every kappa consecutive frames into one wider frame,
so a T x D sequence becomes N x (kappa*D) with N = floor(T / kappa); the
trailing T mod kappa frames are dropped rather than padded. The adapter is
one affine map to a target width, stored on disk by reusing the SRF1 frame
container (weight as a matrix, bias as a single row).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .feature_io import FeatureSequence, load_features, store_features


@dataclass(eq=False)
class StackedSequence:
    """N x (kappa*D) matrix of stacked frames plus its provenance counts."""

    frames: np.ndarray
    stack_factor: int
    source_t: int
    source_id: str = ""

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {self.frames.shape}")
        if self.stack_factor < 1:
            raise ValueError(f"stack_factor must be >= 1, got {self.stack_factor}")
        if self.frames.shape[0] != self.source_t // self.stack_factor:
            raise DataValidationError(
                f"N={self.frames.shape[0]} does not equal "
                f"floor({self.source_t}/{self.stack_factor})"
            )

    @property
    def n(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[1]


def downsample_stack(seq: FeatureSequence, kappa: int) -> StackedSequence:
    """Concatenate every kappa consecutive frames; drop the remainder."""
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    n = seq.t // kappa
    stacked = seq.frames[: n * kappa].reshape(n, kappa * seq.d)
    return StackedSequence(
        frames=stacked.copy(),
        stack_factor=kappa,
        source_t=seq.t,
        source_id=seq.source_id,
    )


def stacked_rate(seq: FeatureSequence, kappa: int) -> Fraction:
    """Frame rate after stacking (emission rate of stacked frames)."""
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    return seq.frame_rate_hz / kappa


@dataclass(eq=False)
class LinearAdapter:
    """One affine projection: in_dim -> h."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weight.ndim != 2:
            raise ValueError(f"weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise DataValidationError("adapter parameters contain non-finite values")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def h(self) -> int:
        return self.weight.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearAdapter):
            return NotImplemented
        return (
            self.weight.shape == other.weight.shape
            and np.array_equal(self.weight, other.weight)
            and np.array_equal(self.bias, other.bias)
        )


def init_adapter(in_dim: int, h: int, seed: int) -> LinearAdapter:
    """Uniform +-1/sqrt(in_dim) weight, zero bias (fan-in scaling)."""
    if in_dim < 1 or h < 1:
        raise ValueError(f"need in_dim >= 1 and h >= 1, got {in_dim}, {h}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(in_dim)
    weight = rng.uniform(-bound, bound, size=(in_dim, h))
    return LinearAdapter(weight=weight.astype(np.float32), bias=np.zeros(h, dtype=np.float32))


def project(seq: StackedSequence, adapter: LinearAdapter) -> np.ndarray:
    """Apply the adapter row-wise: out[n] = frames[n] @ weight + bias."""
    if seq.width != adapter.in_dim:
        raise ValueError(
            f"shape mismatch: stacked width {seq.width}, adapter expects {adapter.in_dim}"
        )
    return seq.frames @ adapter.weight + adapter.bias


def save_adapter(adapter: LinearAdapter, prefix: str | Path) -> None:
    """Write <prefix>.weight.srf and <prefix>.bias.srf."""
    prefix = Path(prefix)
    store_features(
        FeatureSequence(frames=adapter.weight, frame_rate_hz=Fraction(1), source_id="weight"),
        prefix.with_suffix(prefix.suffix + ".weight.srf"),
    )
    store_features(
        FeatureSequence(frames=adapter.bias[None, :], frame_rate_hz=Fraction(1), source_id="bias"),
        prefix.with_suffix(prefix.suffix + ".bias.srf"),
    )


def load_adapter(prefix: str | Path) -> LinearAdapter:
    prefix = Path(prefix)
    weight = load_features(prefix.with_suffix(prefix.suffix + ".weight.srf"))
    bias = load_features(prefix.with_suffix(prefix.suffix + ".bias.srf"))
    if bias.t != 1:
        raise DataValidationError(f"bias file holds {bias.t} rows, expected 1")
    return LinearAdapter(weight=weight.frames, bias=bias.frames[0])

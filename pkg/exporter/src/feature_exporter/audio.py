"""WAV input handling. Accepts 16-bit PCM mono at the expected rate, nothing
else; anything else gets an error that names the problem and the fix. The
exporter never resamples or downmixes (feature extraction must see exactly
the waveform the user vetted)."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError


@dataclass(frozen=True)
class WavInfo:
    sample_rate: int
    n_samples: int


def _check(path: Path, w: wave.Wave_read, expected_rate: int) -> WavInfo:
    rate = w.getframerate()
    if rate != expected_rate:
        raise AudioFormatError(
            f"{path}: sample rate is {rate} Hz but {expected_rate} Hz is required; "
            f"resample first, e.g. `ffmpeg -i {path.name} -ar {expected_rate} out.wav` "
            f"or `sox {path.name} -r {expected_rate} out.wav`"
        )
    if w.getnchannels() != 1:
        raise AudioFormatError(
            f"{path}: {w.getnchannels()} channels, but mono is required; "
            f"downmix first, e.g. `ffmpeg -i {path.name} -ac 1 out.wav`"
        )
    if w.getsampwidth() != 2:
        raise AudioFormatError(
            f"{path}: {8 * w.getsampwidth()}-bit samples, but 16-bit PCM is "
            f"required; convert first, e.g. `sox {path.name} -b 16 out.wav`"
        )
    return WavInfo(sample_rate=rate, n_samples=w.getnframes())


def probe_wav(path: str | Path, expected_rate: int = 16000) -> WavInfo:
    """Validate the header and return rate and length without reading samples."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            return _check(path, w, expected_rate)
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc


def load_wav(path: str | Path, expected_rate: int = 16000) -> np.ndarray:
    """Return the waveform as float32 in [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            info = _check(path, w, expected_rate)
            data = w.readframes(info.n_samples)
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    return np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0

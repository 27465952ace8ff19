"""Feature backends.

Two synthetic backends make the exporter testable and give the downstream
toolkit deterministic fixtures: `synthetic-ssl` turns a waveform into
frame-level vectors through a fixed random projection of the analysis
window, and `synthetic-lm` turns text into per-token states through a fixed
random embedding table. Both are pure functions of (input, model name,
layer, dim), so re-export is always bit-identical.

`hubert-large` and `wavlm-large` wrap the pretrained models through the
transformers package. The wrapper defers imports and weight loading to the
first use, so listing models or planning a dry run never touches the
network.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ArgumentError, ExporterError

WINDOW = 400
HOP = 320


def _rng(*parts: object) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def frame_count(n_samples: int) -> int:
    """Frames produced by a 400-sample window sliding by 320 (the conv stack
    arithmetic of standard 16 kHz speech encoders): 1 second -> 49 frames."""
    if n_samples < WINDOW:
        return 0
    return (n_samples - WINDOW) // HOP + 1


@dataclass(frozen=True)
class SyntheticSSL:
    """Waveform -> per-layer frame features, 50 Hz at 16 kHz input."""

    dim: int = 16
    n_layers: int = 4
    name: str = "synthetic-ssl"
    frame_rate_hz: Fraction = field(default=Fraction(16000, HOP))

    def features(self, samples: np.ndarray, layers: list[int]) -> dict[int, np.ndarray]:
        samples = np.asarray(samples, dtype=np.float64)
        t = frame_count(len(samples))
        if t == 0:
            windows = np.zeros((0, WINDOW // 8))
        else:
            view = np.lib.stride_tricks.sliding_window_view(samples, WINDOW)
            windows = view[:: HOP][:t, ::8]
        out = {}
        for layer in layers:
            rng = _rng(self.name, layer, self.dim)
            proj = rng.standard_normal((self.dim, windows.shape[1]))
            bias = rng.standard_normal(self.dim)
            feats = windows @ proj.T / np.sqrt(windows.shape[1]) + bias
            out[layer] = feats.astype(np.float32)
        return out


@dataclass(frozen=True)
class SyntheticLM:
    """Text -> per-layer token states; one state vector per whitespace token."""

    dim: int = 16
    n_layers: int = 4
    vocab: int = 4096
    name: str = "synthetic-lm"
    frame_rate_hz: Fraction = field(default=Fraction(1))

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def _token_id(self, token: str) -> int:
        digest = hashlib.sha256(token.encode()).digest()
        return int.from_bytes(digest[:4], "little") % self.vocab

    def states(self, text: str, layers: list[int]) -> dict[int, np.ndarray]:
        ids = [self._token_id(tok) for tok in self.tokenize(text)]
        out = {}
        for layer in layers:
            table = _rng(self.name, layer, self.dim, self.vocab).standard_normal(
                (self.vocab, self.dim)
            )
            states = table[ids] if ids else np.zeros((0, self.dim))
            out[layer] = states.astype(np.float32)
        return out


class TransformersSSL:
    """Pretrained encoder via transformers; weights load on first use."""

    def __init__(self, name: str, hf_id: str, n_layers: int, dim: int):
        self.name = name
        self.hf_id = hf_id
        self.n_layers = n_layers
        self.dim = dim
        self.frame_rate_hz = Fraction(16000, HOP)
        self._model = None

    def _load(self):
        if self._model is None:
            try:
                import torch  # noqa: F401
                from transformers import AutoModel
            except ImportError as exc:
                raise ExporterError(
                    f"model {self.name!r} needs the transformers and torch packages; "
                    f"install with `pip install 'feature-exporter[models]'`"
                ) from exc
            self._model = AutoModel.from_pretrained(self.hf_id)
            self._model.eval()
        return self._model

    def features(self, samples: np.ndarray, layers: list[int]) -> dict[int, np.ndarray]:
        import torch

        model = self._load()
        with torch.no_grad():
            out = model(
                torch.from_numpy(np.asarray(samples, dtype=np.float32))[None, :],
                output_hidden_states=True,
            )
        # hidden_states[0] is the conv front end output; transformer layers follow
        hidden = out.hidden_states
        return {
            layer: hidden[layer + 1][0].cpu().numpy().astype(np.float32)
            for layer in layers
        }


def _hubert() -> TransformersSSL:
    return TransformersSSL("hubert-large", "facebook/hubert-large-ll60k", 24, 1024)


def _wavlm() -> TransformersSSL:
    return TransformersSSL("wavlm-large", "microsoft/wavlm-large", 24, 1024)


_SSL_BACKENDS = {
    "synthetic-ssl": lambda dim: SyntheticSSL(dim=dim),
    "hubert-large": lambda dim: _hubert(),
    "wavlm-large": lambda dim: _wavlm(),
}

_LM_BACKENDS = {
    "synthetic-lm": lambda dim: SyntheticLM(dim=dim),
}


def ssl_backend(model: str, dim: int = 16):
    if model not in _SSL_BACKENDS:
        raise ArgumentError(
            f"unknown feature model {model!r}; choose from {sorted(_SSL_BACKENDS)}"
        )
    return _SSL_BACKENDS[model](dim)


def lm_backend(model: str, dim: int = 16):
    if model not in _LM_BACKENDS:
        raise ArgumentError(
            f"unknown state model {model!r}; choose from {sorted(_LM_BACKENDS)}"
        )
    return _LM_BACKENDS[model](dim)


def resolve_layers(backend, layers: list[int] | str) -> list[int]:
    """Expand "all" and validate explicit ids against the backend's range."""
    if layers == "all":
        return list(range(backend.n_layers))
    if not isinstance(layers, list) or not layers:
        raise ArgumentError("layer selection must be 'all' or a non-empty id list")
    for layer in layers:
        if not 0 <= layer < backend.n_layers:
            raise ArgumentError(
                f"layer {layer} not in model {backend.name!r} "
                f"(valid: 0..{backend.n_layers - 1})"
            )
    if len(set(layers)) != len(layers):
        raise ArgumentError(f"duplicate layer ids in selection: {layers}")
    return list(layers)

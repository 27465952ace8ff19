"""Export jobs: audio -> per-layer SRF1 feature files, and paired
speech/text inputs -> per-layer hidden-state dumps.

Output layout for feature export:

    out_dir/<source_id>.layer<k>.srf     one file per (utterance, layer)
    out_dir/manifest.tsv                 rows point at the deepest layer

and for hidden-state export:

    out_dir/speech/<pair_id>.layer<k>.srf
    out_dir/text/<pair_id>.layer<k>.srf

Files are written as computed, with no normalization or trimming; all
post-processing belongs downstream.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .audio import load_wav, probe_wav
from .backends import frame_count, lm_backend, resolve_layers, ssl_backend
from .errors import ArgumentError
from .srf import ManifestRow, write_manifest, write_srf


@dataclass(frozen=True)
class AudioInput:
    source_id: str
    path: Path
    transcript: str = ""
    label: str = ""


@dataclass(frozen=True)
class PairInput:
    pair_id: str
    speech_text: str
    text_text: str


@dataclass(frozen=True)
class ExportJob:
    model: str
    layers: list[int] | str
    inputs: list
    out_dir: Path
    expected_sample_rate: int = 16000
    dim: int = 16
    jobs: int = 1


@dataclass(frozen=True)
class PlannedFile:
    path: Path
    t: int
    d: int
    layer_id: int


@dataclass
class ExportResult:
    written: list[Path] = field(default_factory=list)
    manifest: Path | None = None


def _check_unique_ids(ids: list[str], what: str) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise ArgumentError(f"duplicate {what} {i!r}")
        seen.add(i)


def read_inputs_tsv(path: str | Path) -> list[AudioInput]:
    """Rows: source_id, wav_path[, transcript[, label]]; paths are relative
    to the table file."""
    path = Path(path)
    inputs = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if not 2 <= len(fields) <= 4:
            raise ArgumentError(
                f"{path}:{n}: expected 2-4 tab-separated fields, got {len(fields)}"
            )
        fields += [""] * (4 - len(fields))
        sid, wav, transcript, label = fields
        if not sid or not wav:
            raise ArgumentError(f"{path}:{n}: source_id and wav path must be non-empty")
        inputs.append(AudioInput(sid, (path.parent / wav), transcript, label))
    _check_unique_ids([i.source_id for i in inputs], "source_id")
    return inputs


def read_pairs_tsv(path: str | Path) -> list[PairInput]:
    """Rows: pair_id, speech-side text, text-side text. A row missing either
    side is unpaired and rejected."""
    path = Path(path)
    pairs = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not all(fields):
            raise ArgumentError(
                f"{path}:{n}: unpaired row; need pair_id, speech text, text text"
            )
        pairs.append(PairInput(*fields))
    _check_unique_ids([p.pair_id for p in pairs], "pair_id")
    return pairs


def _feature_name(source_id: str, layer: int) -> str:
    return f"{source_id}.layer{layer}.srf"


def plan_ssl_export(job: ExportJob) -> list[PlannedFile]:
    """Validate everything and list the files export_ssl_features would
    write, reading only WAV headers."""
    backend = ssl_backend(job.model, dim=job.dim)
    layers = resolve_layers(backend, job.layers)
    if not job.inputs:
        raise ArgumentError("no inputs given")
    planned = []
    for item in job.inputs:
        info = probe_wav(item.path, job.expected_sample_rate)
        t = frame_count(info.n_samples)
        for layer in layers:
            planned.append(
                PlannedFile(
                    path=job.out_dir / _feature_name(item.source_id, layer),
                    t=t,
                    d=backend.dim,
                    layer_id=layer,
                )
            )
    return planned


def export_ssl_features(job: ExportJob) -> ExportResult:
    backend = ssl_backend(job.model, dim=job.dim)
    layers = resolve_layers(backend, job.layers)
    if not job.inputs:
        raise ArgumentError("no inputs given")
    _check_unique_ids([i.source_id for i in job.inputs], "source_id")
    job.out_dir.mkdir(parents=True, exist_ok=True)
    result = ExportResult()

    def export_one(item: AudioInput) -> list[Path]:
        samples = load_wav(item.path, job.expected_sample_rate)
        per_layer = backend.features(samples, layers)
        written = []
        for layer in layers:
            out_path = job.out_dir / _feature_name(item.source_id, layer)
            write_srf(out_path, per_layer[layer], backend.frame_rate_hz, layer)
            written.append(out_path)
        return written

    if job.jobs > 1:
        with ThreadPoolExecutor(max_workers=job.jobs) as pool:
            for written in pool.map(export_one, job.inputs):
                result.written.extend(written)
    else:
        for item in job.inputs:
            result.written.extend(export_one(item))

    deepest = max(layers)
    rows = [
        ManifestRow(
            source_id=item.source_id,
            path=_feature_name(item.source_id, deepest),
            transcript=item.transcript,
            label=item.label,
        )
        for item in job.inputs
    ]
    result.manifest = job.out_dir / "manifest.tsv"
    write_manifest(rows, result.manifest)
    return result


def plan_states_export(job: ExportJob) -> list[PlannedFile]:
    backend = lm_backend(job.model, dim=job.dim)
    layers = resolve_layers(backend, job.layers)
    if not job.inputs:
        raise ArgumentError("no inputs given")
    planned = []
    for pair in job.inputs:
        for side, text in (("speech", pair.speech_text), ("text", pair.text_text)):
            t = len(backend.tokenize(text))
            for layer in layers:
                planned.append(
                    PlannedFile(
                        path=job.out_dir / side / _feature_name(pair.pair_id, layer),
                        t=t,
                        d=backend.dim,
                        layer_id=layer,
                    )
                )
    return planned


def export_hidden_states(job: ExportJob) -> ExportResult:
    backend = lm_backend(job.model, dim=job.dim)
    layers = resolve_layers(backend, job.layers)
    if not job.inputs:
        raise ArgumentError("no inputs given")
    _check_unique_ids([p.pair_id for p in job.inputs], "pair_id")
    result = ExportResult()
    for side in ("speech", "text"):
        (job.out_dir / side).mkdir(parents=True, exist_ok=True)
    for pair in job.inputs:
        for side, text in (("speech", pair.speech_text), ("text", pair.text_text)):
            per_layer = backend.states(text, layers)
            for layer in layers:
                out_path = job.out_dir / side / _feature_name(pair.pair_id, layer)
                write_srf(out_path, per_layer[layer], backend.frame_rate_hz, layer)
                result.written.append(out_path)
    return result

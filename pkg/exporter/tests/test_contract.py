"""Cross-component contract: files this package writes must be readable by
the analysis toolkit's own loader, and the committed golden fixtures must
stay in sync with the current exporter. These are the only tests anywhere
that import both packages."""

from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

reprbench = pytest.importorskip("reprbench")

from wav_helpers import tone, write_wav
from feature_exporter import (
    AudioInput,
    ExportJob,
    PairInput,
    export_hidden_states,
    export_ssl_features,
)
import regen_golden

from reprbench.feature_io import load_features, load_manifest
from reprbench.probe import alignment_similarity
from reprbench.quantizer import quantize, train_kmeans
from reprbench.tokenpipe import deduplicate

GOLDEN = Path(__file__).resolve().parents[2] / "tests" / "data" / "golden"


def export_sample(tmp_path, layers=(1, 3), dim=8):
    wavs = [
        write_wav(tmp_path / f"u{i}.wav", tone(2400, freq=180.0 + 120.0 * i))
        for i in range(3)
    ]
    job = ExportJob(
        model="synthetic-ssl",
        layers=list(layers),
        inputs=[AudioInput(p.stem, p, transcript=f"words {i}", label="t") for i, p in enumerate(wavs)],
        out_dir=tmp_path / "out",
        dim=dim,
    )
    return export_ssl_features(job)


def test_every_exported_file_passes_downstream_validation(tmp_path):
    result = export_sample(tmp_path)
    assert len(result.written) == 6
    for path in result.written:
        seq = load_features(path)
        assert seq.frames.shape == (7, 8)
        assert seq.frame_rate_hz == Fraction(50)
        assert np.isfinite(seq.frames).all()
    manifest = load_manifest(result.manifest)
    assert len(manifest) == 3
    for entry in manifest:
        path = manifest.resolve_path(entry, result.manifest.parent)
        assert load_features(path, source_id=entry.source_id).source_id == entry.source_id


def test_downstream_pipeline_consumes_export(tmp_path):
    result = export_sample(tmp_path, layers=(3,))
    manifest = load_manifest(result.manifest)
    seqs = [
        load_features(manifest.resolve_path(e, result.manifest.parent), source_id=e.source_id)
        for e in manifest
    ]
    cb = train_kmeans(np.concatenate([s.frames for s in seqs]), k=4, seed=0)
    tokens = [deduplicate(quantize(s, cb)) for s in seqs]
    assert all(t.stage == "dedup" for t in tokens)
    assert all(max(t.ids) < 4 for t in tokens)


def _states_by_layer(directory: Path) -> dict[int, np.ndarray]:
    grouped: dict[int, list[np.ndarray]] = {}
    for path in sorted(directory.glob("*.srf")):
        seq = load_features(path)
        grouped.setdefault(seq.layer_id, []).append(seq.frames)
    return {layer: np.concatenate(mats) for layer, mats in grouped.items()}


def test_identical_inputs_align_at_one(tmp_path):
    pairs = [PairInput("p0", "walk the dog", "walk the dog"),
             PairInput("p1", "same again here", "same again here")]
    job = ExportJob("synthetic-lm", [0, 1, 2], pairs, tmp_path / "st", dim=8)
    export_hidden_states(job)
    speech = _states_by_layer(tmp_path / "st" / "speech")
    text = _states_by_layer(tmp_path / "st" / "text")
    records = alignment_similarity(speech, text)
    assert [r.layer_id for r in records] == [0, 1, 2]
    for record in records:
        assert record.similarity == pytest.approx(1.0, abs=1e-12)


def test_committed_golden_fixtures_match_current_exporter(tmp_path):
    """Regenerating the fixtures must reproduce the committed bytes. If this
    fails after an intentional backend change, rerun tests/regen_golden.py
    and commit the result."""
    assert GOLDEN.is_dir(), f"golden fixtures missing at {GOLDEN}"
    regen_golden.main(tmp_path)
    fresh = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    committed = sorted(p.relative_to(GOLDEN) for p in GOLDEN.rglob("*") if p.is_file())
    assert fresh == committed
    for rel in fresh:
        assert (tmp_path / rel).read_bytes() == (GOLDEN / rel).read_bytes(), (
            f"fixture drift in {rel}"
        )


def test_exporter_contract_acceptance(tmp_path):
    """One-line summary of the exporter guarantees, in the style of the
    downstream acceptance suite."""
    try:
        result = export_sample(tmp_path)
        for path in result.written:
            load_features(path)
        for entry in load_manifest(GOLDEN / "features" / "manifest.tsv"):
            load_features(
                (GOLDEN / "features" / entry.path), source_id=entry.source_id
            )
        speech = _states_by_layer(GOLDEN / "states" / "speech")
        text = _states_by_layer(GOLDEN / "states" / "text")
        assert speech and set(speech) == {0, 1}
        for record in alignment_similarity(speech, text):
            assert record.similarity == pytest.approx(1.0, abs=1e-12)
    except BaseException:
        print("[ACCEPTANCE] exporter contract: FAIL")
        raise
    print("[ACCEPTANCE] exporter contract: PASS")

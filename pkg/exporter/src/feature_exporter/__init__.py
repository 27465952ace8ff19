"""Dump per-layer speech features and paired hidden states as SRF1 files."""

from .backends import SyntheticLM, SyntheticSSL, frame_count, lm_backend, ssl_backend
from .errors import ArgumentError, AudioFormatError, ExporterError
from .export import (
    AudioInput,
    ExportJob,
    PairInput,
    export_hidden_states,
    export_ssl_features,
    plan_ssl_export,
    plan_states_export,
    read_inputs_tsv,
    read_pairs_tsv,
)
from .srf import ManifestRow, write_manifest, write_srf

__all__ = [
    "ArgumentError",
    "AudioFormatError",
    "AudioInput",
    "ExportJob",
    "ExporterError",
    "ManifestRow",
    "PairInput",
    "SyntheticLM",
    "SyntheticSSL",
    "export_hidden_states",
    "export_ssl_features",
    "frame_count",
    "lm_backend",
    "plan_ssl_export",
    "plan_states_export",
    "read_inputs_tsv",
    "read_pairs_tsv",
    "ssl_backend",
    "write_manifest",
    "write_srf",
]

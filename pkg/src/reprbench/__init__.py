"""Workbench for comparing discrete-token and continuous speech pipelines.

Discrete side: k-means cluster ids, adjacent-duplicate collapse, BPE over
the unit alphabet. Continuous side: frame stacking plus one linear adapter.
Around both: bit-rate and data-size accounting, token frequency and pruning
analysis, softmax probes with layer sweeps, cosine alignment curves, and
WER/PER/accuracy/BLEU scoring. Everything runs on SRF1 feature files; see
the README for the format and the `reprbench` CLI.
"""

from .continuous import LinearAdapter, StackedSequence, downsample_stack, init_adapter, project
from .efficiency import (
    BitRateSpec,
    RateStage,
    RatioStage,
    TokenFrequencyReport,
    bit_rate,
    data_size_table,
    prune_under_trained,
    token_frequency_report,
)
from .errors import (
    ConfigError,
    CorruptionError,
    DataValidationError,
    DivergenceError,
    FormatError,
    ReprbenchError,
    StageError,
)
from .feature_io import (
    FeatureSequence,
    Manifest,
    ManifestEntry,
    load_features,
    load_manifest,
    save_manifest,
    store_features,
    synth_features,
)
from .metrics import EditStats, accuracy, bleu, edit_stats, per, wer
from .probe import (
    ProbeConfig,
    ProbeModel,
    alignment_similarity,
    eval_probe,
    layer_sweep,
    train_probe,
)
from .quantizer import (
    Codebook,
    TokenSequence,
    inertia,
    load_codebook,
    quantize,
    save_codebook,
    train_kmeans,
)
from .tokenpipe import (
    BpeModel,
    apply_bpe,
    decode_bpe,
    deduplicate,
    length_reduction_ratio,
    load_bpe,
    save_bpe,
    train_bpe,
)

__version__ = "0.1.0"

__all__ = [
    "BitRateSpec",
    "BpeModel",
    "Codebook",
    "ConfigError",
    "CorruptionError",
    "DataValidationError",
    "DivergenceError",
    "EditStats",
    "FeatureSequence",
    "FormatError",
    "LinearAdapter",
    "Manifest",
    "ManifestEntry",
    "ProbeConfig",
    "ProbeModel",
    "RateStage",
    "RatioStage",
    "ReprbenchError",
    "StackedSequence",
    "StageError",
    "TokenFrequencyReport",
    "TokenSequence",
    "accuracy",
    "alignment_similarity",
    "apply_bpe",
    "bit_rate",
    "bleu",
    "data_size_table",
    "decode_bpe",
    "deduplicate",
    "downsample_stack",
    "edit_stats",
    "eval_probe",
    "inertia",
    "init_adapter",
    "layer_sweep",
    "length_reduction_ratio",
    "load_bpe",
    "load_codebook",
    "load_features",
    "load_manifest",
    "per",
    "project",
    "prune_under_trained",
    "quantize",
    "save_bpe",
    "save_codebook",
    "save_manifest",
    "store_features",
    "synth_features",
    "token_frequency_report",
    "train_bpe",
    "train_kmeans",
    "train_probe",
    "wer",
]

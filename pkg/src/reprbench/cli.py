"""Command line front end: pipelines, reports, probes, sweeps.

Subcommands: kmeans, tokenize, bpe-train, encode, decode, stack, report,
freq, prune, metrics, probe, layer-sweep, align, sweep. Every option can be
set on the command line or in a key=value config file (see config.py);
flags win over the command's config section, which wins over [common].

Exit codes: 0 success, 2 configuration error, 3 data or validation error,
4 numeric divergence. Reruns with identical config and seed write
bit-identical artifacts; all randomness flows from one master seed
(flag, [common] seed, or the REPRBENCH_SEED env var) through per-component
derivation.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from json import dumps as json_dumps
from pathlib import Path
from typing import Callable

import numpy as np

from .config import COMMON_SECTION, load_config, parse_bool
from .continuous import downsample_stack
from .efficiency import (
    RateStage,
    RatioStage,
    data_size_table,
    frequency_summary,
    prune_under_trained,
    render_data_size_tsv,
    render_frequency_tsv,
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
    feature_path,
    load_features,
    load_manifest,
    save_manifest,
    split_layer_suffix,
    store_features,
)
from .metrics import accuracy, bleu, corpus_edit_stats, edit_stats, normalize_text
from .probe import (
    ProbeConfig,
    alignment_similarity,
    eval_probe,
    holdout_split,
    layer_sweep,
    render_alignment_tsv,
    render_sweep_tsv,
    save_probe,
    train_probe,
)
from .quantizer import fit_kmeans, load_codebook, quantize, save_codebook
from .seeding import derive_seed, resolve_master_seed
from .tokenpipe import (
    apply_bpe,
    decode_bpe,
    deduplicate,
    load_bpe,
    load_token_corpus,
    save_bpe,
    save_token_corpus,
    train_bpe,
)


@dataclass(frozen=True)
class Opt:
    """One resolvable option: CLI flag, config key, typed value."""

    flag: str
    parse: Callable[[str], object]
    default: object = None
    required: bool = False
    help: str = ""
    multi: bool = False

    @property
    def dest(self) -> str:
        return self.flag.replace("-", "_")


def _ident(text: str) -> str:
    return text


def _choice(*allowed: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in allowed:
            raise ValueError(f"expected one of {allowed}, got {text!r}")
        return text

    return parse


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ValueError(f"expected comma-separated integers, got {text!r}") from exc


def _bool_list(text: str) -> list[bool]:
    return [parse_bool(p) for p in text.split(",") if p.strip()]


def resolve_options(
    opts: list[Opt], args: argparse.Namespace, cfg: dict[str, dict[str, str]], command: str
) -> dict[str, object]:
    section = cfg.get(command, {})
    common = cfg.get(COMMON_SECTION, {})
    known = {o.flag for o in opts}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{command}]: {', '.join(unknown)}")
    values: dict[str, object] = {}
    for opt in opts:
        raw = getattr(args, opt.dest, None)
        if raw is None:
            if opt.flag in section:
                raw = section[opt.flag]
            elif opt.flag in common:
                raw = common[opt.flag]
        if raw is None:
            if opt.required:
                raise ConfigError(f"{command}: missing required option --{opt.flag}")
            values[opt.dest] = opt.default
            continue
        items = raw if isinstance(raw, list) else None
        try:
            if opt.multi:
                if items is None:
                    items = [p.strip() for p in raw.split(";") if p.strip()]
                values[opt.dest] = [opt.parse(item) for item in items]
            else:
                values[opt.dest] = opt.parse(raw)
        except ValueError as exc:
            raise ConfigError(f"--{opt.flag}: {exc}") from exc
    return values


# options shared by every probe-flavored command
def _probe_opts() -> list[Opt]:
    return [
        Opt("lr", float, 1e-5, help="learning rate (default 1e-5)"),
        Opt("batch-size", int, 32, help="mini-batch size (default 32)"),
        Opt("epochs", int, 10, help="training epochs (default 10)"),
        Opt("l2", float, 0.0, help="L2 penalty on weight matrices (default 0)"),
        Opt("embed-dim", int, 32, help="embedding width for discrete probes"),
        Opt("hidden", int, 64, help="adapter width for continuous probes"),
        Opt("eval-fraction", float, 0.2, help="held-out fraction of utterances"),
    ]


def _seed_opt() -> Opt:
    return Opt("seed", int, None, help="master seed (default: REPRBENCH_SEED or 0)")


def _probe_config(values: dict, master_seed: int) -> ProbeConfig:
    return ProbeConfig(
        lr=values["lr"],
        batch_size=values["batch_size"],
        epochs=values["epochs"],
        seed=derive_seed(master_seed, "probe"),
        l2=values["l2"],
        embed_dim=values["embed_dim"],
        hidden=values["hidden"],
    )


def _load_manifest_pairs(manifest_path: Path) -> list[tuple[ManifestEntry, FeatureSequence]]:
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        raise DataValidationError(f"{manifest_path}: manifest has no entries")
    pairs = []
    for entry in manifest:
        path = manifest.resolve_path(entry, manifest_path.parent)
        pairs.append((entry, load_features(path, source_id=entry.source_id)))
    return pairs


def _concat_frames(pairs: list[tuple[ManifestEntry, FeatureSequence]]) -> np.ndarray:
    dims = {seq.d for _, seq in pairs}
    if len(dims) > 1:
        raise DataValidationError(f"feature files disagree on D: {sorted(dims)}")
    return np.concatenate([seq.frames for _, seq in pairs], axis=0)


def _labels_from(pairs_or_entries, manifest_path: Path) -> dict[str, str]:
    labels = {}
    for entry in pairs_or_entries:
        if not entry.label:
            raise DataValidationError(
                f"{manifest_path}: entry {entry.source_id!r} has no label"
            )
        labels[entry.source_id] = entry.label
    return labels


def _json_text(obj: object) -> str:
    return json_dumps(obj, sort_keys=True, indent=2) + "\n"


def _print_kv(**kwargs: object) -> None:
    for key, value in kwargs.items():
        print(f"{key}={value}")


# ---------------------------------------------------------------- kmeans


KMEANS_OPTS = [
    Opt("manifest", Path, required=True, help="manifest of feature files to train on"),
    Opt("out", Path, required=True, help="codebook output path (SCB1)"),
    Opt("k", int, 2000, help="number of centroids (default 2000)"),
    Opt("max-iters", int, 100, help="Lloyd iteration cap (default 100)"),
    Opt("tol", float, 1e-6, help="relative inertia improvement threshold"),
    Opt("frame-stride", int, 1, help="train on every stride-th frame"),
    Opt("trace-out", Path, help="inertia trace TSV (default: <out>.trace.tsv)"),
    _seed_opt(),
]


def cmd_kmeans(values: dict, master_seed: int) -> int:
    pairs = _load_manifest_pairs(values["manifest"])
    frames = _concat_frames(pairs)
    result = fit_kmeans(
        frames,
        k=values["k"],
        max_iters=values["max_iters"],
        tol=values["tol"],
        seed=derive_seed(master_seed, "kmeans"),
        frame_stride=values["frame_stride"],
    )
    cb = result.codebook
    save_codebook(cb, values["out"])
    trace_path = values["trace_out"] or Path(f"{values['out']}.trace.tsv")
    trace_lines = ["iteration\tinertia"]
    trace_lines += [f"{i}\t{x!r}" for i, x in enumerate(result.inertia_trace)]
    Path(trace_path).write_text("\n".join(trace_lines) + "\n", encoding="utf-8")
    used = set()
    for _, seq in pairs:
        used.update(quantize(seq, cb).ids)
    _print_kv(
        codebook=values["out"],
        k=cb.k,
        d=cb.d,
        iterations=len(result.inertia_trace),
        trained_inertia=repr(cb.trained_inertia),
        used_clusters=len(used),
    )
    return 0


# ---------------------------------------------------------------- tokenize


TOKENIZE_OPTS = [
    Opt("manifest", Path, required=True, help="manifest of feature files"),
    Opt("codebook", Path, required=True, help="SCB1 codebook"),
    Opt("out", Path, required=True, help="token corpus output (TSV)"),
    Opt("dedup", parse_bool, True, help="collapse adjacent duplicates (default true)"),
    Opt("bpe", Path, help="BPE1 model to apply (requires dedup)"),
    _seed_opt(),
]


def cmd_tokenize(values: dict, master_seed: int) -> int:
    if values["bpe"] is not None and not values["dedup"]:
        raise ConfigError("BPE runs on de-duplicated sequences; set dedup=true")
    cb = load_codebook(values["codebook"])
    model = load_bpe(values["bpe"]) if values["bpe"] is not None else None
    if model is not None and model.base_vocab != cb.k:
        raise ConfigError(
            f"BPE base vocab {model.base_vocab} does not match codebook k {cb.k}"
        )
    pairs = _load_manifest_pairs(values["manifest"])
    corpus = []
    ratios = []
    for _, seq in pairs:
        raw = quantize(seq, cb)
        current = raw
        if values["dedup"]:
            current = deduplicate(current)
        if model is not None:
            current = apply_bpe(current, model)
        corpus.append(current)
        if len(raw) > 0:
            ratios.append(len(current) / len(raw))
    save_token_corpus(corpus, values["out"])
    stage = corpus[0].stage if corpus else "raw"
    mean_ratio = sum(ratios) / len(ratios) if ratios else float("nan")
    _print_kv(corpus=values["out"], utterances=len(corpus), stage=stage,
              mean_length_ratio=repr(mean_ratio))
    return 0


# ---------------------------------------------------------------- bpe-train


BPE_TRAIN_OPTS = [
    Opt("corpus", Path, required=True, help="dedup-stage token corpus (TSV)"),
    Opt("out", Path, required=True, help="BPE model output (BPE1 text)"),
    Opt("target-vocab", int, 6000, help="final vocabulary size (default 6000)"),
    Opt("base-vocab", int, help="codebook size; alternative to --codebook"),
    Opt("codebook", Path, help="SCB1 codebook to take the base vocab from"),
    _seed_opt(),
]


def cmd_bpe_train(values: dict, master_seed: int) -> int:
    if values["base_vocab"] is None and values["codebook"] is None:
        raise ConfigError("give either --base-vocab or --codebook")
    base_vocab = values["base_vocab"]
    if values["codebook"] is not None:
        k = load_codebook(values["codebook"]).k
        if base_vocab is not None and base_vocab != k:
            raise ConfigError(f"--base-vocab {base_vocab} contradicts codebook k {k}")
        base_vocab = k
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    model = train_bpe(corpus, target_vocab=values["target_vocab"], base_vocab=base_vocab)
    save_bpe(model, values["out"])
    _print_kv(
        model=values["out"],
        base_vocab=model.base_vocab,
        vocab_size=model.vocab_size,
        merges=len(model.merges),
        exhausted=str(model.exhausted).lower(),
    )
    return 0


# ---------------------------------------------------------------- encode / decode


ENCODE_OPTS = [
    Opt("corpus", Path, required=True, help="dedup-stage token corpus"),
    Opt("model", Path, required=True, help="BPE1 model"),
    Opt("out", Path, required=True, help="bpe-stage corpus output"),
    _seed_opt(),
]


def cmd_encode(values: dict, master_seed: int) -> int:
    model = load_bpe(values["model"])
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    out = [apply_bpe(seq, model) for seq in corpus]
    save_token_corpus(out, values["out"])
    before = sum(len(s) for s in corpus)
    after = sum(len(s) for s in out)
    ratio = after / before if before else float("nan")
    _print_kv(corpus=values["out"], utterances=len(out), length_ratio=repr(ratio))
    return 0


DECODE_OPTS = [
    Opt("corpus", Path, required=True, help="bpe-stage token corpus"),
    Opt("model", Path, required=True, help="BPE1 model"),
    Opt("out", Path, required=True, help="dedup-stage corpus output"),
    _seed_opt(),
]


def cmd_decode(values: dict, master_seed: int) -> int:
    model = load_bpe(values["model"])
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    out = [decode_bpe(seq, model) for seq in corpus]
    save_token_corpus(out, values["out"])
    _print_kv(corpus=values["out"], utterances=len(out))
    return 0


# ---------------------------------------------------------------- stack


STACK_OPTS = [
    Opt("manifest", Path, required=True, help="manifest of feature files"),
    Opt("out-dir", Path, required=True, help="directory for stacked SRF1 files"),
    Opt("kappa", int, 2, help="frames concatenated per output frame (default 2)"),
    _seed_opt(),
]


def cmd_stack(values: dict, master_seed: int) -> int:
    pairs = _load_manifest_pairs(values["manifest"])
    out_dir = values["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    kappa = values["kappa"]
    entries = []
    for entry, seq in pairs:
        stacked = downsample_stack(seq, kappa)
        out_seq = FeatureSequence(
            frames=stacked.frames,
            frame_rate_hz=seq.frame_rate_hz / kappa,
            layer_id=seq.layer_id,
            source_id=seq.source_id,
        )
        path = feature_path(out_dir, entry.source_id, seq.layer_id)
        store_features(out_seq, path)
        entries.append(
            ManifestEntry(entry.source_id, path.name, entry.transcript, entry.label)
        )
    save_manifest(Manifest(entries), out_dir / "manifest.tsv")
    _print_kv(out_dir=out_dir, utterances=len(entries), kappa=kappa)
    return 0


# ---------------------------------------------------------------- report / freq


def _parse_stage_spec(text: str) -> RateStage | RatioStage:
    name, sep, rest = text.partition(":")
    if not sep or not name:
        raise ValueError(f"stage spec needs NAME:KEY=VALUE[,KEY=VALUE], got {text!r}")
    fields = {}
    for item in rest.split(","):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"bad stage field {item!r} in {text!r}")
        fields[key.strip()] = value.strip()
    keys = set(fields)
    if keys == {"ratio"}:
        return RatioStage(name, float(fields["ratio"]))
    if keys == {"bits", "rate"}:
        return RateStage(name, float(fields["bits"]), float(fields["rate"]))
    raise ValueError(f"stage {name!r} needs either ratio= or bits=,rate= (got {sorted(keys)})")


REPORT_OPTS = [
    Opt("corpus", Path, required=True, help="token corpus for the frequency report"),
    Opt("out-dir", Path, required=True, help="directory for the report bundle"),
    Opt("threshold", float, 0.95, help="cumulative frequency cutoff (default 0.95)"),
    Opt("vocab-size", int, help="id range; defaults to max id + 1"),
    Opt("t-seconds", float, 1.0, help="duration for the data-size table"),
    Opt("bit-depth", float, 32.0, help="continuous row: bits per value"),
    Opt("dim", int, 1024, help="continuous row: feature dimensionality"),
    Opt("frame-rate", float, 25.0, help="continuous row: frames per second"),
    Opt(
        "stage",
        _parse_stage_spec,
        default=[],
        multi=True,
        help="table row, repeatable: NAME:bits=B,rate=R or NAME:ratio=X",
    ),
    _seed_opt(),
]


def cmd_report(values: dict, master_seed: int) -> int:
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    report = token_frequency_report(corpus, values["threshold"], values["vocab_size"])
    out_dir = values["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "frequency.tsv").write_text(render_frequency_tsv(report), encoding="utf-8")
    summary: dict = {"frequency": frequency_summary(report)}
    if values["stage"]:
        rows = data_size_table(
            values["t_seconds"],
            (values["bit_depth"], values["dim"], values["frame_rate"]),
            values["stage"],
        )
        (out_dir / "data_size.tsv").write_text(render_data_size_tsv(rows), encoding="utf-8")
        summary["data_size"] = [
            {"stage": r.stage, "bits": r.bits, "reduction_ratio": r.reduction_ratio}
            for r in rows
        ]
    (out_dir / "summary.json").write_text(_json_text(summary), encoding="utf-8")
    _print_kv(out_dir=out_dir, **frequency_summary(report))
    return 0


FREQ_OPTS = [
    Opt("corpus", Path, required=True, help="token corpus (TSV)"),
    Opt("out", Path, required=True, help="frequency report TSV"),
    Opt("threshold", float, 0.95, help="cumulative frequency cutoff (default 0.95)"),
    Opt("vocab-size", int, help="id range; defaults to max id + 1"),
    Opt("summary-out", Path, help="optional JSON summary path"),
    _seed_opt(),
]


def cmd_freq(values: dict, master_seed: int) -> int:
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    report = token_frequency_report(corpus, values["threshold"], values["vocab_size"])
    values["out"].write_text(render_frequency_tsv(report), encoding="utf-8")
    if values["summary_out"] is not None:
        values["summary_out"].write_text(_json_text(frequency_summary(report)), encoding="utf-8")
    _print_kv(out=values["out"], **frequency_summary(report))
    return 0


# ---------------------------------------------------------------- prune


PRUNE_OPTS = [
    Opt("corpus", Path, required=True, help="raw-stage token corpus"),
    Opt("codebook", Path, required=True, help="SCB1 codebook the ids refer to"),
    Opt("out", Path, required=True, help="remapped corpus output"),
    Opt("prune-fraction", float, 0.1, help="fraction of ids to drop (default 0.1)"),
    Opt("remap-out", Path, help="remap table TSV (default: <out>.remap.tsv)"),
    _seed_opt(),
]


def cmd_prune(values: dict, master_seed: int) -> int:
    corpus = load_token_corpus(values["corpus"])
    if not corpus:
        raise DataValidationError(f"{values['corpus']}: corpus is empty")
    cb = load_codebook(values["codebook"])
    remapped, remap = prune_under_trained(corpus, cb, values["prune_fraction"])
    save_token_corpus(remapped, values["out"])
    remap_path = values["remap_out"] or Path(f"{values['out']}.remap.tsv")
    lines = ["pruned\tretained"]
    lines += [f"{p}\t{r}" for p, r in sorted(remap.items())]
    Path(remap_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _print_kv(out=values["out"], pruned_ids=len(remap), vocab=cb.k)
    return 0


# ---------------------------------------------------------------- metrics


METRICS_OPTS = [
    Opt("task", _choice("wer", "per", "accuracy", "bleu"), required=True,
        help="which metric to compute"),
    Opt("refs", Path, required=True, help="reference TSV: source_id TAB text"),
    Opt("hyps", Path, required=True, help="hypothesis TSV: source_id TAB text"),
    Opt("normalize", parse_bool, help="lowercase/strip punctuation (default: wer only)"),
    Opt("char-level", parse_bool, False, help="bleu: score characters, not words"),
    Opt("out-dir", Path, help="write per-utterance and corpus TSV plus JSON here"),
    _seed_opt(),
]


def _load_text_table(path: Path) -> dict[str, str]:
    table: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        source_id, sep, text = line.partition("\t")
        if not sep or not source_id:
            raise DataValidationError(f"{path}:{lineno}: expected source_id TAB text")
        if source_id in table:
            raise DataValidationError(f"{path}:{lineno}: duplicate source_id {source_id!r}")
        table[source_id] = text
    if not table:
        raise DataValidationError(f"{path}: no usable rows")
    return table


def cmd_metrics(values: dict, master_seed: int) -> int:
    task = values["task"]
    refs = _load_text_table(values["refs"])
    hyps = _load_text_table(values["hyps"])
    if set(refs) != set(hyps):
        missing = sorted(set(refs) ^ set(hyps))
        raise DataValidationError(f"ref/hyp ids differ, first mismatches: {missing[:5]}")
    normalize = values["normalize"]
    if normalize is None:
        normalize = task == "wer"

    def tokens(text: str) -> list[str]:
        if normalize:
            text = normalize_text(text)
        if task == "bleu" and values["char_level"]:
            return list(text.replace(" ", ""))
        return text.split()

    ids = sorted(refs)
    per_utt_lines = []
    summary: dict[str, object] = {"task": task, "utterances": len(ids)}
    if task in ("wer", "per"):
        ref_seqs = [tokens(refs[i]) for i in ids]
        hyp_seqs = [tokens(hyps[i]) for i in ids]
        stats = corpus_edit_stats(ref_seqs, hyp_seqs)
        if stats.ref_len == 0:
            raise DataValidationError("total reference length is zero")
        score = stats.distance / stats.ref_len
        per_utt_lines.append("source_id\tsub\tins\tdel\thits\tref_len\trate")
        for i, ref_seq, hyp_seq in zip(ids, ref_seqs, hyp_seqs):
            st = edit_stats(ref_seq, hyp_seq)
            rate = repr(st.distance / st.ref_len) if st.ref_len else ""
            per_utt_lines.append(
                f"{i}\t{st.substitutions}\t{st.insertions}\t{st.deletions}"
                f"\t{st.hits}\t{st.ref_len}\t{rate}"
            )
        summary.update(
            substitutions=stats.substitutions,
            insertions=stats.insertions,
            deletions=stats.deletions,
            hits=stats.hits,
            ref_len=stats.ref_len,
        )
    elif task == "accuracy":
        ref_labels = [refs[i].strip() for i in ids]
        hyp_labels = [hyps[i].strip() for i in ids]
        score = accuracy(ref_labels, hyp_labels)
        per_utt_lines.append("source_id\tref\thyp\tcorrect")
        for i, r, h in zip(ids, ref_labels, hyp_labels):
            per_utt_lines.append(f"{i}\t{r}\t{h}\t{int(r == h)}")
    else:
        ref_seqs = [tokens(refs[i]) for i in ids]
        hyp_seqs = [tokens(hyps[i]) for i in ids]
        score = bleu(ref_seqs, hyp_seqs)
        per_utt_lines.append("source_id\tref_len\thyp_len\tsentence_bleu")
        for i, ref_seq, hyp_seq in zip(ids, ref_seqs, hyp_seqs):
            sent = bleu([ref_seq], [hyp_seq])
            per_utt_lines.append(f"{i}\t{len(ref_seq)}\t{len(hyp_seq)}\t{sent!r}")
    summary["score"] = score
    if values["out_dir"] is not None:
        out_dir = values["out_dir"]
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "per_utterance.tsv").write_text(
            "\n".join(per_utt_lines) + "\n", encoding="utf-8"
        )
        (out_dir / "corpus.tsv").write_text(
            f"task\tscore\n{task}\t{score!r}\n", encoding="utf-8"
        )
        (out_dir / "summary.json").write_text(_json_text(summary), encoding="utf-8")
    _print_kv(task=task, score=repr(score))
    return 0


# ---------------------------------------------------------------- probe


PROBE_OPTS = [
    Opt("kind", _choice("discrete", "continuous"), required=True,
        help="representation entering the probe"),
    Opt("manifest", Path, required=True, help="manifest with labels (and feature paths)"),
    Opt("corpus", Path, help="token corpus (required for kind=discrete)"),
    Opt("vocab", int, help="discrete: id range; defaults to max id + 1"),
    Opt("out-dir", Path, help="save the trained probe and training log here"),
    *_probe_opts(),
    _seed_opt(),
]

_KIND_NAMES = {"discrete": "embedding_bag_discrete", "continuous": "mean_pool_continuous"}


def _probe_dataset(values: dict) -> tuple[list[str], dict[str, object], dict[str, str]]:
    """Returns (ordered source ids, representation per id, label per id)."""
    manifest_path = values["manifest"]
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        raise DataValidationError(f"{manifest_path}: manifest has no entries")
    labels = _labels_from(manifest, manifest_path)
    reps: dict[str, object] = {}
    if values["kind"] == "discrete":
        if values["corpus"] is None:
            raise ConfigError("kind=discrete needs --corpus")
        by_id = {seq.source_id: seq for seq in load_token_corpus(values["corpus"])}
        for entry in manifest:
            seq = by_id.get(entry.source_id)
            if seq is None:
                raise DataValidationError(
                    f"{values['corpus']}: no tokens for {entry.source_id!r}"
                )
            if len(seq) == 0:
                raise DataValidationError(f"empty token sequence for {entry.source_id!r}")
            reps[entry.source_id] = seq
    else:
        for entry in manifest:
            seq = load_features(
                manifest.resolve_path(entry, manifest_path.parent), source_id=entry.source_id
            )
            if seq.t == 0:
                raise DataValidationError(f"no frames for {entry.source_id!r}")
            reps[entry.source_id] = seq.frames
    return sorted(labels), reps, labels


def cmd_probe(values: dict, master_seed: int) -> int:
    ids, reps, labels = _probe_dataset(values)
    train_ids, eval_ids = holdout_split(
        ids, values["eval_fraction"], derive_seed(master_seed, "probe-split")
    )
    config = _probe_config(values, master_seed)
    kind = _KIND_NAMES[values["kind"]]
    train_data = [(reps[i], labels[i]) for i in train_ids]
    eval_data = [(reps[i], labels[i]) for i in eval_ids]
    training = train_probe(train_data, config, kind, vocab=values["vocab"])
    train_acc = eval_probe(training.model, train_data)
    eval_acc = eval_probe(training.model, eval_data)
    if values["out_dir"] is not None:
        out_dir = values["out_dir"]
        save_probe(training.model, out_dir)
        log = {
            "classes": training.model.classes,
            "eval_accuracy": eval_acc,
            "eval_size": len(eval_data),
            "final_lr": training.final_lr,
            "kind": kind,
            "loss_trace": training.loss_trace,
            "lr_halvings": training.n_halvings,
            "train_accuracy": train_acc,
            "train_size": len(train_data),
        }
        (out_dir / "training.json").write_text(_json_text(log), encoding="utf-8")
    _print_kv(
        kind=kind,
        train_size=len(train_data),
        eval_size=len(eval_data),
        final_loss=repr(training.loss_trace[-1]),
        lr_halvings=training.n_halvings,
        train_accuracy=repr(train_acc),
        eval_accuracy=repr(eval_acc),
    )
    return 0


# ---------------------------------------------------------------- layer-sweep


LAYER_SWEEP_OPTS = [
    Opt("kind", _choice("discrete", "continuous"), required=True,
        help="representation entering the probes"),
    Opt("manifest", Path, required=True, help="manifest providing labels"),
    Opt("features-dir", Path, help="continuous: dir of <source_id>.layer<k>.srf files"),
    Opt("corpus-dir", Path, help="discrete: dir of layer<k>.tsv token corpora"),
    Opt("vocab", int, help="discrete: id range; defaults to max id + 1"),
    Opt("out", Path, help="sweep result TSV"),
    *_probe_opts(),
    _seed_opt(),
]


def _sweep_layers_continuous(features_dir: Path, labels: dict[str, str]) -> dict:
    per_layer: dict[int, list] = {}
    files = sorted(features_dir.glob("*.srf"))
    if not files:
        raise DataValidationError(f"{features_dir}: no .srf files found")
    for path in files:
        source_id, layer = split_layer_suffix(path.stem)
        if layer is None:
            raise DataValidationError(f"{path}: expected <source_id>.layer<k>.srf naming")
        if source_id not in labels:
            raise DataValidationError(f"{path}: {source_id!r} is not in the manifest")
        seq = load_features(path, source_id=source_id)
        per_layer.setdefault(layer, []).append((source_id, seq.frames, labels[source_id]))
    return per_layer


def _sweep_layers_discrete(corpus_dir: Path, labels: dict[str, str]) -> dict:
    per_layer: dict[int, list] = {}
    files = sorted(corpus_dir.glob("layer*.tsv"))
    if not files:
        raise DataValidationError(f"{corpus_dir}: no layer<k>.tsv files found")
    for path in files:
        suffix = path.stem[len("layer") :]
        if not suffix.isdigit():
            raise DataValidationError(f"{path}: expected layer<k>.tsv naming")
        layer = int(suffix)
        triples = []
        for seq in load_token_corpus(path):
            if seq.source_id not in labels:
                raise DataValidationError(f"{path}: {seq.source_id!r} is not in the manifest")
            if len(seq) == 0:
                raise DataValidationError(f"{path}: empty sequence for {seq.source_id!r}")
            triples.append((seq.source_id, seq, labels[seq.source_id]))
        per_layer[layer] = triples
    return per_layer


def cmd_layer_sweep(values: dict, master_seed: int) -> int:
    manifest = load_manifest(values["manifest"])
    labels = _labels_from(manifest, values["manifest"])
    if values["kind"] == "continuous":
        if values["features_dir"] is None:
            raise ConfigError("kind=continuous needs --features-dir")
        per_layer = _sweep_layers_continuous(values["features_dir"], labels)
    else:
        if values["corpus_dir"] is None:
            raise ConfigError("kind=discrete needs --corpus-dir")
        per_layer = _sweep_layers_discrete(values["corpus_dir"], labels)
    config = _probe_config(values, master_seed)
    result = layer_sweep(
        per_layer,
        config,
        _KIND_NAMES[values["kind"]],
        eval_fraction=values["eval_fraction"],
        vocab=values["vocab"],
    )
    if values["out"] is not None:
        values["out"].write_text(render_sweep_tsv(result), encoding="utf-8")
    for record in result.records:
        print(f"layer={record.layer_id} score={record.score!r}")
    best = max(result.records, key=lambda r: (r.score, -r.layer_id))
    _print_kv(best_layer=best.layer_id)
    return 0


# ---------------------------------------------------------------- align


ALIGN_OPTS = [
    Opt("speech-dir", Path, required=True, help="dir of speech-side SRF1 state dumps"),
    Opt("text-dir", Path, required=True, help="dir of text-side SRF1 state dumps"),
    Opt("out", Path, help="alignment curve TSV"),
    _seed_opt(),
]


def _states_by_layer(directory: Path) -> dict[int, np.ndarray]:
    files = sorted(directory.glob("*.srf"))
    if not files:
        raise DataValidationError(f"{directory}: no .srf files found")
    grouped: dict[int, list[np.ndarray]] = {}
    for path in files:
        seq = load_features(path)
        grouped.setdefault(seq.layer_id, []).append(seq.frames)
    return {
        layer: np.concatenate(mats, axis=0) for layer, mats in sorted(grouped.items())
    }


def cmd_align(values: dict, master_seed: int) -> int:
    speech = _states_by_layer(values["speech_dir"])
    text = _states_by_layer(values["text_dir"])
    records = alignment_similarity(speech, text)
    if values["out"] is not None:
        values["out"].write_text(render_alignment_tsv(records), encoding="utf-8")
    for r in records:
        print(f"layer={r.layer_id} similarity={r.similarity!r}")
    return 0


# ---------------------------------------------------------------- sweep


SWEEP_OPTS = [
    Opt("manifest", Path, required=True, help="manifest with features and labels"),
    Opt("pipeline", _choice("discrete", "continuous"), required=True,
        help="which pipeline's knobs to sweep"),
    Opt("out", Path, required=True, help="ablation table TSV"),
    Opt("k-grid", _int_list, [2000], help="discrete: centroid counts, comma-separated"),
    Opt("bpe-grid", _int_list, [6000], help="discrete: BPE vocab sizes (0 = BPE off)"),
    Opt("dedup-grid", _bool_list, [True], help="discrete: dedup on/off values"),
    Opt("kappa-grid", _int_list, [2], help="continuous: stack factors"),
    Opt("max-iters", int, 100, help="k-means iteration cap"),
    Opt("tol", float, 1e-6, help="k-means convergence threshold"),
    Opt("jobs", int, 1, help="parallel worker count (default 1)"),
    *_probe_opts(),
    _seed_opt(),
]


@dataclass
class _Cell:
    params: dict[str, object]
    score: float | None = None
    mean_ratio: float | None = None
    error: BaseException | None = None
    extras: dict[str, object] = field(default_factory=dict)


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DivergenceError):
        return 4
    return 3


def _run_discrete_cell(
    cell: _Cell,
    pairs: list[tuple[ManifestEntry, FeatureSequence]],
    frames: np.ndarray,
    labels: dict[str, str],
    values: dict,
    master_seed: int,
) -> None:
    k = cell.params["k"]
    bpe_vocab = cell.params["bpe_vocab"]
    dedup = cell.params["dedup"]
    if bpe_vocab and not dedup:
        raise ConfigError("BPE runs on de-duplicated sequences; this cell disables dedup")
    cb = fit_kmeans(
        frames, k, max_iters=values["max_iters"], tol=values["tol"],
        seed=derive_seed(master_seed, "kmeans"),
    ).codebook
    raw = {entry.source_id: quantize(seq, cb) for entry, seq in pairs}
    current = dict(raw)
    if dedup:
        current = {i: deduplicate(s) for i, s in current.items()}
    if bpe_vocab:
        if bpe_vocab <= k:
            raise ConfigError(f"bpe vocab {bpe_vocab} must exceed k {k}")
        model = train_bpe(sorted(current.values(), key=lambda s: s.source_id),
                          target_vocab=bpe_vocab, base_vocab=k)
        current = {i: apply_bpe(s, model) for i, s in current.items()}
    ratios = [len(current[i]) / len(raw[i]) for i in raw if len(raw[i])]
    cell.mean_ratio = sum(ratios) / len(ratios) if ratios else float("nan")
    for i, seq in current.items():
        if len(seq) == 0:
            raise DataValidationError(f"empty token sequence for {i!r}")
    ids = sorted(labels)
    train_ids, eval_ids = holdout_split(
        ids, values["eval_fraction"], derive_seed(master_seed, "probe-split")
    )
    config = _probe_config(values, master_seed)
    vocab = bpe_vocab if bpe_vocab else k
    training = train_probe(
        [(current[i], labels[i]) for i in train_ids],
        config, "embedding_bag_discrete", vocab=vocab,
    )
    cell.score = eval_probe(training.model, [(current[i], labels[i]) for i in eval_ids])


def _run_continuous_cell(
    cell: _Cell,
    pairs: list[tuple[ManifestEntry, FeatureSequence]],
    labels: dict[str, str],
    values: dict,
    master_seed: int,
) -> None:
    kappa = cell.params["kappa"]
    stacked = {}
    ratios = []
    for entry, seq in pairs:
        st = downsample_stack(seq, kappa)
        if st.n == 0:
            raise DataValidationError(f"{entry.source_id!r}: too short for kappa={kappa}")
        stacked[entry.source_id] = st.frames
        if seq.t:
            ratios.append(st.n / seq.t)
    cell.mean_ratio = sum(ratios) / len(ratios) if ratios else float("nan")
    ids = sorted(labels)
    train_ids, eval_ids = holdout_split(
        ids, values["eval_fraction"], derive_seed(master_seed, "probe-split")
    )
    config = _probe_config(values, master_seed)
    training = train_probe(
        [(stacked[i], labels[i]) for i in train_ids], config, "mean_pool_continuous"
    )
    cell.score = eval_probe(training.model, [(stacked[i], labels[i]) for i in eval_ids])


def cmd_sweep(values: dict, master_seed: int) -> int:
    pairs = _load_manifest_pairs(values["manifest"])
    labels = _labels_from((entry for entry, _ in pairs), values["manifest"])
    cells: list[_Cell] = []
    if values["pipeline"] == "discrete":
        frames = _concat_frames(pairs)
        for k in values["k_grid"]:
            for bpe_vocab in values["bpe_grid"]:
                for dedup in values["dedup_grid"]:
                    cells.append(_Cell({"k": k, "bpe_vocab": bpe_vocab, "dedup": dedup}))

        def run(cell: _Cell) -> None:
            _run_discrete_cell(cell, pairs, frames, labels, values, master_seed)

    else:
        for kappa in values["kappa_grid"]:
            cells.append(_Cell({"kappa": kappa}))

        def run(cell: _Cell) -> None:
            _run_continuous_cell(cell, pairs, labels, values, master_seed)

    def guarded(cell: _Cell) -> None:
        try:
            run(cell)
        except (ReprbenchError, ValueError, OSError) as exc:
            cell.error = exc

    jobs = max(1, values["jobs"])
    if jobs == 1:
        for cell in cells:
            guarded(cell)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(guarded, cells))

    columns = ["pipeline", "k", "bpe_vocab", "dedup", "kappa",
               "score", "mean_ratio", "status", "error"]
    lines = ["\t".join(columns)]
    for cell in cells:
        row = {c: "-" for c in columns}
        row["pipeline"] = values["pipeline"]
        for key, value in cell.params.items():
            row[key] = str(value).lower() if isinstance(value, bool) else str(value)
        if cell.error is None:
            row["status"] = "ok"
            row["error"] = ""
            row["score"] = repr(cell.score)
            row["mean_ratio"] = repr(cell.mean_ratio)
        else:
            row["status"] = "error"
            row["error"] = " ".join(str(cell.error).split())
        lines.append("\t".join(row[c] for c in columns))
    values["out"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    failures = [c for c in cells if c.error is not None]
    _print_kv(out=values["out"], cells=len(cells), failures=len(failures))
    if failures:
        return max(_exit_code_for(c.error) for c in failures)
    return 0


# ---------------------------------------------------------------- wiring


COMMANDS: dict[str, tuple[list[Opt], Callable[[dict, int], int], str]] = {
    "kmeans": (KMEANS_OPTS, cmd_kmeans, "train a k-means codebook over a manifest"),
    "tokenize": (TOKENIZE_OPTS, cmd_tokenize, "quantize features to token sequences"),
    "bpe-train": (BPE_TRAIN_OPTS, cmd_bpe_train, "learn BPE merges from a dedup corpus"),
    "encode": (ENCODE_OPTS, cmd_encode, "apply a BPE model to a dedup corpus"),
    "decode": (DECODE_OPTS, cmd_decode, "expand a bpe corpus back to cluster ids"),
    "stack": (STACK_OPTS, cmd_stack, "frame-stack features for the continuous pipeline"),
    "report": (REPORT_OPTS, cmd_report, "efficiency bundle: size table + frequencies"),
    "freq": (FREQ_OPTS, cmd_freq, "token frequency report with tail cutoff"),
    "prune": (PRUNE_OPTS, cmd_prune, "remap under-trained ids to nearest neighbors"),
    "metrics": (METRICS_OPTS, cmd_metrics, "score ref/hyp tables (wer/per/accuracy/bleu)"),
    "probe": (PROBE_OPTS, cmd_probe, "train and evaluate a softmax probe"),
    "layer-sweep": (LAYER_SWEEP_OPTS, cmd_layer_sweep, "probe every layer independently"),
    "align": (ALIGN_OPTS, cmd_align, "speech/text hidden-state cosine alignment curve"),
    "sweep": (SWEEP_OPTS, cmd_sweep, "grid ablation over pipeline knobs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reprbench",
        description="discrete-token vs continuous speech representation workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (opts, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None,
                       help="key=value config file with [section] headers")
        for opt in opts:
            p.add_argument(
                f"--{opt.flag}",
                dest=opt.dest,
                default=None,
                action="append" if opt.multi else "store",
                metavar="VALUE",
                help=opt.help,
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else {}
    opts, fn, _ = COMMANDS[args.command]
    values = resolve_options(opts, args, cfg, args.command)
    master_seed = resolve_master_seed(values.pop("seed", None))
    return fn(values, master_seed)


def entry(argv: list[str] | None = None) -> int:
    try:
        return main(argv)
    except ConfigError as exc:
        print(f"reprbench: config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"reprbench: divergence: {exc}", file=sys.stderr)
        return 4
    except (FormatError, CorruptionError, DataValidationError, StageError) as exc:
        print(f"reprbench: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"reprbench: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(entry())

"""Command line front end.

    feature-export ssl    --model synthetic-ssl --out-dir OUT (WAV... | --inputs TSV)
    feature-export states --model synthetic-lm  --out-dir OUT --pairs TSV

Both subcommands take --layers (comma-separated ids or "all", default all)
and --dry-run, which validates inputs and prints the planned files without
writing anything. Exit codes: 0 ok, 2 bad arguments, 3 unreadable or
rejected input data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio import AudioFormatError
from .errors import ArgumentError, ExporterError
from .export import (
    AudioInput,
    ExportJob,
    export_hidden_states,
    export_ssl_features,
    plan_ssl_export,
    plan_states_export,
    read_inputs_tsv,
    read_pairs_tsv,
)


def _parse_layers(text: str) -> list[int] | str:
    if text == "all":
        return "all"
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ArgumentError(f"--layers: expected 'all' or comma-separated ids, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feature-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ssl = sub.add_parser("ssl", help="export per-layer features from WAV files")
    ssl.add_argument("wavs", nargs="*", type=Path, help="WAV files (source_id = stem)")
    ssl.add_argument("--inputs", type=Path, help="TSV: source_id, wav[, transcript[, label]]")
    ssl.add_argument("--model", default="synthetic-ssl")
    ssl.add_argument("--out-dir", type=Path, required=True)
    ssl.add_argument("--layers", default="all")
    ssl.add_argument("--dim", type=int, default=16,
                     help="feature width for synthetic models (fixed for real ones)")
    ssl.add_argument("--sample-rate", type=int, default=16000)
    ssl.add_argument("--jobs", type=int, default=1, help="parallel file writers")
    ssl.add_argument("--dry-run", action="store_true")

    states = sub.add_parser("states", help="export paired speech/text hidden states")
    states.add_argument("--pairs", type=Path, required=True,
                        help="TSV: pair_id, speech text, text text")
    states.add_argument("--model", default="synthetic-lm")
    states.add_argument("--out-dir", type=Path, required=True)
    states.add_argument("--layers", default="all")
    states.add_argument("--dim", type=int, default=16)
    states.add_argument("--dry-run", action="store_true")
    return parser


def _ssl_inputs(args: argparse.Namespace) -> list[AudioInput]:
    if args.inputs and args.wavs:
        raise ArgumentError("give WAV files or --inputs, not both")
    if args.inputs:
        return read_inputs_tsv(args.inputs)
    if not args.wavs:
        raise ArgumentError("no inputs given (WAV files or --inputs)")
    return [AudioInput(source_id=p.stem, path=p) for p in args.wavs]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ssl":
        job = ExportJob(
            model=args.model,
            layers=_parse_layers(args.layers),
            inputs=_ssl_inputs(args),
            out_dir=args.out_dir,
            expected_sample_rate=args.sample_rate,
            dim=args.dim,
            jobs=args.jobs,
        )
        if args.dry_run:
            for planned in plan_ssl_export(job):
                print(f"{planned.path}\tT={planned.t}\tD={planned.d}\tlayer={planned.layer_id}")
            return 0
        result = export_ssl_features(job)
        print(f"wrote {len(result.written)} feature files and {result.manifest}")
        return 0

    job = ExportJob(
        model=args.model,
        layers=_parse_layers(args.layers),
        inputs=read_pairs_tsv(args.pairs),
        out_dir=args.out_dir,
        dim=args.dim,
    )
    if args.dry_run:
        for planned in plan_states_export(job):
            print(f"{planned.path}\tT={planned.t}\tD={planned.d}\tlayer={planned.layer_id}")
        return 0
    result = export_hidden_states(job)
    print(f"wrote {len(result.written)} state files under {job.out_dir}")
    return 0


def entry(argv: list[str] | None = None) -> int:
    try:
        return main(argv)
    except (ArgumentError,) as exc:
        print(f"feature-export: {exc}", file=sys.stderr)
        return 2
    except (AudioFormatError, ExporterError, OSError) as exc:
        print(f"feature-export: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(entry())

"""Command-line entry point: train, stream, eval, sweep, synth.

stdout carries only machine-readable output (JSON documents, JSONL event
records, CSV sweep tables); every diagnostic goes to stderr. Each error
class maps to a distinct exit code (see ``EXIT_CODES``); argparse usage
errors exit 2. Every subcommand is deterministic given its flags, inputs,
and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import evaluate as evaluate_mod
from . import infer, synth
from .errors import (
    ActsegError,
    EmptyDatasetError,
    EmptyEvaluationError,
    EmptyTrainingSetError,
    EmptyValidationSetError,
    InvalidGeneratorSpec,
    InvariantViolation,
    IoFailure,
    MalformedLineError,
    NoTrueStartsError,
    SchemaVersionError,
    ZeroLikelihoodError,
)
from .ingest import load_dataset, parse_event_line, split_chronological
from .model import ModelConfig, load_model, save_model
from .train import train_full

EXIT_CODES: dict[type, int] = {
    IoFailure: 3,
    MalformedLineError: 4,
    EmptyDatasetError: 4,
    EmptyTrainingSetError: 5,
    EmptyValidationSetError: 5,
    SchemaVersionError: 6,
    InvariantViolation: 6,
    EmptyEvaluationError: 7,
    NoTrueStartsError: 7,
    ZeroLikelihoodError: 8,
    InvalidGeneratorSpec: 9,
}


def _exit_code(exc: ActsegError) -> int:
    for klass, code in EXIT_CODES.items():
        if isinstance(exc, klass):
            return code
    return 1


def _load_config(args: argparse.Namespace) -> ModelConfig:
    """Config file values first, then flag overrides."""
    config = ModelConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise IoFailure(f"config {path} is not valid JSON: {exc}") from exc
        unknown = set(data) - set(config.to_dict())
        if unknown:
            raise IoFailure(f"config {path} has unknown fields: {sorted(unknown)}")
        config = ModelConfig.from_dict({**config.to_dict(), **data})
    overrides = {}
    for flag, name in (
        ("n_preceding", "n_preceding"),
        ("k_states", "k_states"),
        ("smoothing", "smoothing"),
        ("alpha", "alpha"),
        ("duration_bins", "n_duration_bins"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        config = replace(config, **overrides)
    return config


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (documented in README)")
    parser.add_argument("--n-preceding", dest="n_preceding", type=int)
    parser.add_argument("--k-states", dest="k_states", type=int)
    parser.add_argument("--smoothing", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--duration-bins", dest="duration_bins", type=int)


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    events, report = load_dataset(args.data, on_error=args.on_error)
    if not events:
        raise EmptyDatasetError(f"{args.data} contains no events")
    split = split_chronological(events)
    model, training_report = train_full(split.train, split.validation, config)
    save_model(model, args.out)
    report.segment_count = training_report.n_segments
    report.per_class_segments = training_report.per_class_segments
    report.extraction_issues = training_report.extraction_issues
    document = {
        "parse_report": report.to_dict(),
        "split": {
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        },
        "training_report": training_report.to_dict(),
        "model_path": str(args.out),
    }
    print(json.dumps(document, sort_keys=True))
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    names = model.classes.names
    state = infer.new_stream_state(model)
    if args.input in (None, "-"):
        handle = sys.stdin
        close = False
    else:
        try:
            handle = open(args.input, "r", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read {args.input}: {exc}") from exc
        close = True
    try:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                event = parse_event_line(line, line_no)
            except MalformedLineError as exc:
                print(f"skipping malformed input: {exc}", file=sys.stderr)
                continue
            state, prediction, record = infer.process_event(model, state, event)
            print(json.dumps(prediction.to_dict(names), sort_keys=True), flush=True)
            if record is not None:
                print(json.dumps(record.to_dict(names), sort_keys=True), flush=True)
        record = infer.finalize_open_segment(model, state)
        if record is not None:
            print(json.dumps(record.to_dict(names), sort_keys=True), flush=True)
    finally:
        if close:
            handle.close()
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    events, parse_report = load_dataset(args.data)
    if not events:
        raise EmptyDatasetError(f"{args.data} contains no events")

    document: dict = {"parse_report": parse_report.to_dict()}
    if args.baseline is None:
        result = evaluate_mod.evaluate_stream(model, events, alpha=args.alpha)
        document["proposed"] = result.to_dict()
    else:
        if args.train_data:
            baseline_train, _ = load_dataset(args.train_data)
            test_events = events
        else:
            split = split_chronological(events)
            baseline_train = split.train
            test_events = split.test
            document["note"] = (
                "no --train-data given: baseline trained on the 70% chronological "
                "split of --data; both methods scored on its 20% test split"
            )
        result = evaluate_mod.evaluate_stream(model, test_events, alpha=args.alpha)
        counts, baseline_acc = evaluate_mod.baseline_fixed_window(
            baseline_train, test_events, window_size=args.baseline
        )
        document["proposed"] = result.to_dict()
        document["baseline"] = {
            "window_size": args.baseline,
            "accuracy": baseline_acc,
            "confusion": counts.to_dict(),
        }
    if result.unk_rate > 0:
        print(
            f"warning: {result.unk_rate:.1%} of events map to the unknown-token index "
            "(model vocabulary does not cover this data)",
            file=sys.stderr,
        )
    print(json.dumps(document, sort_keys=True))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError as exc:
        raise IoFailure(f"bad --grid value: {exc}") from exc
    if not grid:
        print("error: --grid must list at least one value", file=sys.stderr)
        return 2
    config = _load_config(args)
    events, _ = load_dataset(args.data)
    if not events:
        raise EmptyDatasetError(f"{args.data} contains no events")
    split = split_chronological(events)
    report = evaluate_mod.sweep(args.param, grid, split.train, split.validation, config)
    sys.stdout.write(report.to_csv())
    print(f"best {report.parameter}: {report.best:g}", file=sys.stderr)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read profile {args.spec}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidGeneratorSpec(f"{args.spec} is not valid JSON: {exc}") from exc
    profile = synth.StreamProfile.from_dict(data)
    n_activities = data.get("n_activities", args.activities)
    events, truth = synth.generate_stream(profile, n_activities, args.seed)
    if args.out == "-":
        synth.write_stream(events, sys.stdout)
    else:
        try:
            with open(args.out, "w", encoding="utf-8") as handle:
                synth.write_stream(events, handle)
        except OSError as exc:
            raise IoFailure(f"cannot write {args.out}: {exc}") from exc
        print(f"wrote {len(events)} events, {len(truth)} activities to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actseg",
        description="Streaming activity recognition on sensor event logs.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_train = sub.add_parser("train", help="Train a model from a labeled event log")
    p_train.add_argument("--data", required=True, help="labeled event log (text)")
    p_train.add_argument("--out", required=True, help="model file to write (JSON)")
    p_train.add_argument("--on-error", choices=("skip", "abort"), default="skip")
    _add_config_flags(p_train)
    p_train.set_defaults(handler=cmd_train)

    p_stream = sub.add_parser("stream", help="Per-event JSONL predictions from a file or stdin")
    p_stream.add_argument("--model", required=True)
    p_stream.add_argument("--input", default="-", help="event log path, or - for stdin")
    p_stream.set_defaults(handler=cmd_stream)

    p_eval = sub.add_parser("eval", help="Score a model on a labeled event log")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--baseline", type=int, default=None, metavar="N",
                        help="also score a fixed-window baseline with window size N")
    p_eval.add_argument("--train-data", default=None,
                        help="training log for the baseline (defaults to a 70%% split of --data)")
    p_eval.add_argument("--alpha", type=float, default=None,
                        help="override the duration-likelihood threshold")
    p_eval.set_defaults(handler=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="Parameter sweep, CSV on stdout")
    p_sweep.add_argument("--param", required=True, choices=("n", "alpha"))
    p_sweep.add_argument("--grid", required=True, help="comma-separated values")
    p_sweep.add_argument("--data", required=True)
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(handler=cmd_sweep)

    p_synth = sub.add_parser("synth", help="Generate a synthetic labeled event log")
    p_synth.add_argument("--spec", required=True, help="stream profile (JSON)")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True, help="output path, or - for stdout")
    p_synth.add_argument("--activities", type=int, default=100,
                         help="activity count if the profile does not set n_activities")
    p_synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.handler(args)
    except ActsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

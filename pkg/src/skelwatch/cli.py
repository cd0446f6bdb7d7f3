"""Command-line entry point binding the pipeline stages.

Subcommands: ``gen-data`` (seeded synthetic corpus), ``train``, ``eval``,
``stream`` (file or socket source with optional SMS alerting), and
``send-test-alert``. Exit codes are stable: 0 ok, 2 config or usage error,
3 data or shape error, 4 gateway failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import warnings
from pathlib import Path

from . import model as M
from .alerts import AlertDispatcher, SmsRequest, format_alert, send_sms
from .config import ConfigFileError, load_app_config
from .dataset import build_samples, split_dataset
from .metrics import (
    UndefinedMetricWarning,
    confusion_to_csv,
    history_to_csv,
    report_to_text,
)
from .skeleton import ParseError, label_from_code, parse_sequence_file, write_sequence_file
from .streaming import StreamConfig, file_frame_source, run_stream, socket_frame_source
from .synthetic import generate_synthetic_corpus
from .tensor import ContractError
from .training import evaluate, train

__all__ = ["EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_GATEWAY", "build_parser", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GATEWAY = 4

MANIFEST_NAME = "manifest.csv"
SPLIT_CHOICES = ("cross-subject", "cross-view")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# gen-data


def _cmd_gen_data(args) -> int:
    if args.per_class < 1:
        return _fail(EXIT_CONFIG, f"--per-class must be >= 1, got {args.per_class}")
    corpus = generate_synthetic_corpus(args.per_class, args.seed, fps=args.fps)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        per_class_index: dict[str, int] = {}
        for seq in corpus:
            code = seq.label.class_code
            index = per_class_index.get(code, 0)
            per_class_index[code] = index + 1
            name = f"{code}_{index:03d}_s{seq.subject_id:02d}_c{seq.camera_id}.jsonl"
            write_sequence_file(seq, out / name)
            rows.append((name, code, seq.subject_id, seq.camera_id))
        with open(out / MANIFEST_NAME, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["file", "label", "subject", "camera"])
            writer.writerows(rows)
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot write to {out}: {exc}")
    print(f"wrote {len(corpus)} sequences and {MANIFEST_NAME} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# shared data loading


def _load_corpus(data_dir: Path):
    manifest = data_dir / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest} (run gen-data first?)")
    sequences = []
    with open(manifest, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"file", "label", "subject", "camera"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ParseError(
                f"manifest {manifest} must have columns file,label,subject,camera"
            )
        for row in reader:
            sequences.append(parse_sequence_file(data_dir / row["file"]))
    if not sequences:
        raise ParseError(f"manifest {manifest} lists no files")
    return sequences


def _split_samples(sequences, grid: int, split: str, train_fraction: float, seed: int):
    samples = build_samples(sequences, grid=grid)
    return split_dataset(
        samples, split.replace("-", "_"), train_fraction=train_fraction, seed=seed
    )


def _print_split_report(split: str, train_set, test_set) -> None:
    if split == "cross-subject":
        group, kind = (lambda s: s.provenance.subject_id), "subjects"
    else:
        group, kind = (lambda s: s.provenance.camera_id), "cameras"
    train_groups = sorted({group(s) for s in train_set})
    test_groups = sorted({group(s) for s in test_set})
    print(
        f"split {split}: train {kind} {train_groups} ({len(train_set)} samples), "
        f"test {kind} {test_groups} ({len(test_set)} samples)"
    )


def _checkpoint_mismatch(
    expected: M.ModelConfig, config: M.ModelConfig, params: M.ModelParams
):
    """First discrepancy between a loaded checkpoint and the expected model config.

    Tensor shapes are compared by name first; config fields that leave every
    tensor shape unchanged (e.g. input_grid) are compared after.
    """
    want = M.init_parameters(expected, seed=0).named()
    have = params.named()
    for name, tensor in want.items():
        if name not in have:
            return f"tensor {name!r} missing from checkpoint"
        if tuple(have[name].shape) != tuple(tensor.shape):
            return (
                f"tensor {name!r} has shape {tuple(have[name].shape)}, "
                f"config expects {tuple(tensor.shape)}"
            )
    for name in have:
        if name not in want:
            return f"checkpoint has unexpected tensor {name!r}"
    if config != expected:
        for field in dataclasses.fields(M.ModelConfig):
            a, b = getattr(config, field.name), getattr(expected, field.name)
            if a != b:
                return f"config field {field.name!r} is {a!r} in checkpoint, {b!r} expected"
    return None


# ---------------------------------------------------------------------------
# train


def _cmd_train(args) -> int:
    try:
        cfg = load_app_config(args.config)
    except ConfigFileError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    data_dir = Path(args.data if args.data else cfg.paths.data_dir)
    try:
        sequences = _load_corpus(data_dir)
        train_set, test_set = _split_samples(
            sequences, cfg.model.input_grid, args.split, args.train_fraction, cfg.train.seed
        )
    except (FileNotFoundError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, str(exc))
    _print_split_report(args.split, train_set, test_set)
    checkpoint = Path(args.checkpoint if args.checkpoint else cfg.paths.checkpoint)
    try:
        params = M.init_parameters(cfg.model, seed=cfg.train.seed)
        params, history = train(cfg.model, params, train_set, cfg.train)
    except (M.ConfigError, ContractError) as exc:
        return _fail(EXIT_DATA, f"shape error before training: {exc}")
    try:
        if checkpoint.parent != Path(""):
            checkpoint.parent.mkdir(parents=True, exist_ok=True)
        M.save_checkpoint(checkpoint, cfg.model, params)
        history_path = checkpoint.with_suffix(".history.csv")
        history_path.write_text(history_to_csv(history), encoding="utf-8")
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot write {checkpoint}: {exc}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        train_report = evaluate(cfg.model, params, train_set)
        test_report = evaluate(cfg.model, params, test_set)
    print(f"checkpoint: {checkpoint}")
    print(f"history: {history_path}")
    print(
        f"final train accuracy {train_report.accuracy:.4f}, "
        f"test accuracy {test_report.accuracy:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _cmd_eval(args) -> int:
    seed = args.seed
    model_config = None
    if args.config is not None:
        try:
            app = load_app_config(args.config)
        except ConfigFileError as exc:
            return _fail(EXIT_CONFIG, str(exc))
        model_config = app.model
        if seed is None:
            seed = app.train.seed
    if seed is None:
        seed = 0
    try:
        config, params = M.load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        return _fail(EXIT_DATA, f"checkpoint not found: {args.checkpoint}")
    except (OSError, ValueError) as exc:
        return _fail(EXIT_DATA, f"cannot load checkpoint {args.checkpoint}: {exc}")
    if model_config is not None:
        mismatch = _checkpoint_mismatch(model_config, config, params)
        if mismatch:
            return _fail(EXIT_DATA, f"checkpoint/config mismatch: {mismatch}")
    try:
        sequences = _load_corpus(Path(args.data))
        train_set, test_set = _split_samples(
            sequences, config.input_grid, args.split, args.train_fraction, seed
        )
    except (FileNotFoundError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, str(exc))
    samples = train_set if args.side == "train" else test_set
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        report = evaluate(config, params, samples)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.txt").write_text(report_to_text(report), encoding="utf-8")
        (out / "confusion.csv").write_text(confusion_to_csv(report), encoding="utf-8")
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot write reports to {out}: {exc}")
    print(f"{args.side} accuracy {report.accuracy:.4f} on {report.total} samples")
    print(f"reports: {out / 'eval_report.txt'}, {out / 'confusion.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stream


def _cmd_stream(args) -> int:
    cfg = None
    if args.config is not None:
        try:
            cfg = load_app_config(args.config)
        except ConfigFileError as exc:
            return _fail(EXIT_CONFIG, str(exc))
    stream_config = cfg.stream if cfg is not None else StreamConfig()
    try:
        model = M.Model.load(args.checkpoint)
    except FileNotFoundError:
        return _fail(EXIT_DATA, f"checkpoint not found: {args.checkpoint}")
    except (OSError, ValueError) as exc:
        return _fail(EXIT_DATA, f"cannot load checkpoint {args.checkpoint}: {exc}")
    if cfg is not None:
        mismatch = _checkpoint_mismatch(cfg.model, model.config, model.params)
        if mismatch:
            return _fail(EXIT_DATA, f"checkpoint/config mismatch: {mismatch}")

    if args.source == "file":
        if args.input is None:
            return _fail(EXIT_CONFIG, "--source file requires --input PATH")
        if not Path(args.input).is_file():
            return _fail(EXIT_DATA, f"input not found: {args.input}")
        source = file_frame_source(
            args.input, target_fps=args.fps, pace=args.pace, speed=args.speed
        )
    else:
        source = socket_frame_source(
            host=args.host,
            port=args.port,
            on_listening=lambda addr: print(f"listening on {addr[0]}:{addr[1]}", flush=True),
        )

    dispatcher = None
    if args.alerts == "on":
        if cfg is None or cfg.gateway is None:
            return _fail(
                EXIT_CONFIG, "--alerts on requires --config with a gateway section"
            )
        dispatcher = AlertDispatcher(
            cfg.gateway,
            cfg.patient_label,
            log_path=cfg.paths.delivery_log,
            critical_codes=cfg.critical_codes,
        )
        sink = dispatcher.handle_event
    else:
        def sink(event):
            print(
                f"event {event.event_id}: {event.label.display_name} "
                f"confidence {event.confidence:.3f} "
                f"window [{event.window_start:.2f}s, {event.window_end:.2f}s]"
            )

    try:
        summary = run_stream(source, model, stream_config, sink, fps=args.fps)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_OK
    print(f"frames processed: {summary.frames_processed} (rejected {summary.frames_rejected})")
    print(f"ticks: {summary.ticks}, events: {summary.events}")
    print(f"p95 tick latency: {summary.p95_latency_seconds * 1000.0:.1f} ms")
    if dispatcher is not None:
        print(f"delivery log: {cfg.paths.delivery_log}")
        if dispatcher.parked_count or dispatcher.dropped_count:
            print(
                f"undelivered alerts parked: {dispatcher.parked_count}, "
                f"dropped: {dispatcher.dropped_count}"
            )
    if summary.source_error is not None:
        return _fail(EXIT_DATA, f"source failed: {summary.source_error}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# send-test-alert


def _cmd_send_test_alert(args) -> int:
    try:
        cfg = load_app_config(args.config)
    except ConfigFileError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if cfg.gateway is None:
        return _fail(EXIT_CONFIG, "config has no gateway section")
    from .streaming import ActivityEvent

    probe = ActivityEvent(
        label=label_from_code("A43"),
        confidence=0.9,
        window_start=0.0,
        window_end=2.0,
        event_id=1,
    )
    body = format_alert(probe, cfg.patient_label)
    to = cfg.gateway.recipients[0]
    result = send_sms(
        SmsRequest(to=to, from_number=cfg.gateway.from_number, body=body), cfg.gateway
    )
    print(
        f"to: {to}, status: {result.status}, attempts: {result.attempts}, "
        f"sid: {result.message_sid}, error: {result.error}, "
        f"latency: {result.latency_seconds:.3f}s"
    )
    return EXIT_OK if result.accepted else EXIT_GATEWAY


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelwatch",
        description="Recognize medical-related activities in skeleton streams "
        "and send SMS alerts for critical ones.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a seeded synthetic skeleton corpus")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--per-class", type=int, required=True, help="sequences per class")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--fps", type=float, default=24.0, help="capture rate of the corpus")
    gen.set_defaults(func=_cmd_gen_data)

    tr = sub.add_parser("train", help="train a model on a generated corpus")
    tr.add_argument("--config", required=True, help="JSON config file")
    tr.add_argument("--split", required=True, choices=SPLIT_CHOICES)
    tr.add_argument("--checkpoint", default=None, help="output checkpoint path "
                    "(default: paths.checkpoint from the config)")
    tr.add_argument("--data", default=None, help="corpus directory "
                    "(default: paths.data_dir from the config)")
    tr.add_argument("--train-fraction", type=float, default=0.8)
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="corpus directory")
    ev.add_argument("--split", required=True, choices=SPLIT_CHOICES)
    ev.add_argument("--config", default=None, help="validate checkpoint against this config")
    ev.add_argument("--out", default=".", help="directory for report files")
    ev.add_argument("--side", choices=("test", "train"), default="test",
                    help="which side of the split to score")
    ev.add_argument("--train-fraction", type=float, default=0.8)
    ev.add_argument("--seed", type=int, default=None,
                    help="split seed (default: train.seed from --config, else 0)")
    ev.set_defaults(func=_cmd_eval)

    st = sub.add_parser("stream", help="classify a live or replayed frame stream")
    st.add_argument("--checkpoint", required=True)
    st.add_argument("--source", required=True, choices=("file", "socket"))
    st.add_argument("--input", default=None, help="JSONL file for --source file")
    st.add_argument("--host", default="127.0.0.1", help="bind host for --source socket")
    st.add_argument("--port", type=int, default=5555, help="bind port for --source socket")
    st.add_argument("--config", default=None, help="JSON config file (stream + gateway)")
    st.add_argument("--alerts", choices=("on", "off"), default="off")
    st.add_argument("--fps", type=float, default=10.0, help="analysis frame rate")
    st.add_argument("--speed", type=float, default=1.0, help="file replay speed factor")
    st.add_argument("--pace", action="store_true", help="replay file in real time")
    st.set_defaults(func=_cmd_stream)

    ts = sub.add_parser("send-test-alert", help="send one test SMS through the gateway")
    ts.add_argument("--config", required=True, help="JSON config file with a gateway section")
    ts.set_defaults(func=_cmd_send_test_alert)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

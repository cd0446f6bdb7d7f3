"""Train an activity classifier on a synthetic skeleton corpus.

Generates a seeded corpus, splits it by subject or camera, trains the
configured model, and writes checkpoint + history + evaluation report
into an output directory. Meant for desk-scale experiments; wall time
scales with grid size, so the default is the compact preset.

Usage:
    python3 scripts/train_synthetic.py --out runs/compact --epochs 30
"""
from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import skelwatch.model as model_lib
from skelwatch.dataset import build_samples, split_dataset
from skelwatch.metrics import confusion_to_csv, history_to_csv, report_to_text
from skelwatch.synthetic import generate_synthetic_corpus
from skelwatch.training import TrainConfig, evaluate, train


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--per-class", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--split", choices=("cross_subject", "cross_view"),
                        default="cross_subject")
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--preset", choices=("compact", "default"), default="compact")
    parser.add_argument("--grid", type=int, default=None,
                        help="override raster grid size")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--learning-rate", type=float, default=0.005)
    parser.add_argument("--patience", type=int, default=None)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    if args.preset == "compact":
        config = model_lib.compact_config()
    else:
        config = model_lib.default_config()
    if args.grid is not None:
        import dataclasses
        config = dataclasses.replace(config, input_grid=args.grid)

    t0 = time.perf_counter()
    corpus = generate_synthetic_corpus(args.per_class, args.seed)
    samples = build_samples(corpus, grid=config.input_grid)
    train_set, test_set = split_dataset(samples, args.split,
                                        train_fraction=args.train_fraction,
                                        seed=args.seed)
    print(f"corpus: {len(samples)} samples, {len(train_set)} train / "
          f"{len(test_set)} test ({args.split}), "
          f"prep {time.perf_counter() - t0:.1f}s")

    train_config = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                               learning_rate=args.learning_rate,
                               seed=args.seed, patience=args.patience)

    def progress(record):
        print(f"epoch {record.epoch:3d}  loss {record.loss:.4f}  "
              f"train_acc {record.accuracy:.4f}", flush=True)

    t0 = time.perf_counter()
    params = model_lib.init_parameters(config, seed=args.seed)
    params, history = train(config, params, train_set, train_config,
                            callbacks=(progress,))
    elapsed = time.perf_counter() - t0

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train_report = evaluate(config, params, train_set)
        test_report = evaluate(config, params, test_set)

    checkpoint = args.out / "model.ckpt"
    model_lib.save_checkpoint(checkpoint, config, params)
    (args.out / "history.csv").write_text(history_to_csv(history))
    (args.out / "eval_train.txt").write_text(report_to_text(train_report))
    (args.out / "eval_test.txt").write_text(report_to_text(test_report))
    (args.out / "confusion_test.csv").write_text(confusion_to_csv(test_report))

    print(f"trained {len(history)} epochs in {elapsed:.0f}s "
          f"({elapsed / max(len(history), 1):.1f}s/epoch)")
    print(f"train accuracy {train_report.accuracy:.4f}, "
          f"test accuracy {test_report.accuracy:.4f}")
    print(f"artifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

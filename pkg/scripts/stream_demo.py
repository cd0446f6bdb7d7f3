"""Stream a synthetic sequence through a trained checkpoint and print events.

Synthesizes one sequence for the requested class with a held-out subject
id, feeds it through the sliding-window classifier, and prints every
emitted event plus the stream summary. Useful for eyeballing threshold
and cooldown settings before wiring up a real gateway.

Usage:
    python3 scripts/stream_demo.py --checkpoint runs/compact/model.ckpt
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from skelwatch.model import Model, load_checkpoint
from skelwatch.skeleton import label_from_code
from skelwatch.streaming import StreamConfig, run_stream
from skelwatch.synthetic import generate_sequence


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--class-code", default="A43",
                        help="activity to synthesize (default: falling down)")
    parser.add_argument("--subject", type=int, default=99,
                        help="subject id for the synthetic actor")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--fps", type=float, default=10.0)
    parser.add_argument("--threshold", type=float, default=0.7)
    parser.add_argument("--consecutive", type=int, default=2)
    parser.add_argument("--cooldown", type=float, default=30.0)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    config, params = load_checkpoint(args.checkpoint)
    model = Model(config, params)

    label = label_from_code(args.class_code)
    rng = np.random.default_rng(args.seed)
    sequence = generate_sequence(label, args.subject, 1, rng)
    print(f"synthesized {label.display_name!r}: {len(sequence.frames)} frames "
          f"at {sequence.source_fps:.0f} fps")

    stream_config = StreamConfig(confidence_threshold=args.threshold,
                                 consecutive_required=args.consecutive,
                                 cooldown_seconds=args.cooldown)

    def sink(event):
        flag = " [CRITICAL]" if event.label.critical else ""
        print(f"event {event.event_id}: {event.label.display_name}{flag} "
              f"confidence {event.confidence:.3f} "
              f"window [{event.window_start:.2f}s, {event.window_end:.2f}s]")

    summary = run_stream(iter(sequence.frames), model, stream_config, sink,
                         fps=args.fps)
    print(f"frames {summary.frames_processed} (rejected {summary.frames_rejected}), "
          f"ticks {summary.ticks}, events {summary.events}, "
          f"p95 latency {summary.p95_latency_seconds * 1e3:.1f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Measure per-window classification latency against the 100 ms budget.

Runs repeated forward passes over a synthetic sliding window for the
chosen preset and prints p50/p95/max latency. The streaming loop calls
the classifier once per hop, so the per-window figure bounds end-to-end
event latency when input arrives in real time.

Usage:
    python3 scripts/benchmark_latency.py --preset default --windows 50
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import skelwatch.model as model_lib


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", choices=("compact", "default"),
                        default="default")
    parser.add_argument("--window-frames", type=int, default=20)
    parser.add_argument("--windows", type=int, default=50)
    parser.add_argument("--warmup", type=int, default=3)
    parser.add_argument("--budget-ms", type=float, default=100.0)
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    if args.preset == "compact":
        config = model_lib.compact_config()
    else:
        config = model_lib.default_config()
    params = model_lib.init_parameters(config, seed=args.seed)
    model = model_lib.Model(config, params)

    rng = np.random.default_rng(args.seed)
    window = rng.random((args.window_frames, 1, config.input_grid,
                         config.input_grid), dtype=np.float32)

    for _ in range(args.warmup):
        model.classify(window)

    latencies = []
    for _ in range(args.windows):
        t0 = time.perf_counter()
        model.classify(window)
        latencies.append((time.perf_counter() - t0) * 1e3)
    latencies.sort()

    p50 = latencies[len(latencies) // 2]
    p95 = latencies[min(len(latencies) - 1, int(len(latencies) * 0.95))]
    print(f"{args.preset} (grid {config.input_grid}), "
          f"{args.window_frames}-frame window, {args.windows} runs:")
    print(f"p50 {p50:.1f} ms  p95 {p95:.1f} ms  max {latencies[-1]:.1f} ms  "
          f"budget {args.budget_ms:.0f} ms")
    if p95 > args.budget_ms:
        print("p95 exceeds budget")
        return 1
    print("within budget")
    return 0


if __name__ == "__main__":
    sys.exit(main())

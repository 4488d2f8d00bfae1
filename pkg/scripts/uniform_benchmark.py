#!/usr/bin/env python3
"""Dense-RMSE benchmark on synthetic uniform shifts.

Trains one model per shift magnitude and prints a small table of
dense RMSE against the exact displacement, plus wall time per pair.
Useful as a quick regression check when touching the training loop.
"""

import argparse
import time

import numpy as np

from flowfit import (
    ModelConfig,
    TrainConfig,
    UniformFlow,
    generate_pair,
    init_model,
    make_truth_grid,
    pixel_grid_coords,
    rmse_dense,
    sample_grid,
    train_pair,
)


def run_case(shift, args):
    flow = UniformFlow(*shift)
    pair = generate_pair(flow, shape=(args.size, args.size), seed=args.seed)
    model_cfg = ModelConfig(beta=args.beta)
    train_cfg = TrainConfig(epochs=args.epochs, seed=args.seed, deterministic=True)
    model = init_model(model_cfg, seed=args.seed)

    start = time.time()
    report = train_pair(model, pair.frame1, pair.frame2, train_cfg)
    elapsed = time.time() - start

    xs, ys = pixel_grid_coords(pair.frame1.shape)
    pred = sample_grid(model, xs, ys)
    truth = make_truth_grid(flow, xs, ys)
    return rmse_dense(pred, truth), report.final_loss, elapsed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256, help="square image side")
    ap.add_argument("--beta", type=float, default=200.0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--shifts",
        default="0.5,0.2;1.6,-0.9;3.7,-2.2;7.3,4.1",
        help="semicolon-separated U,V pairs",
    )
    args = ap.parse_args()

    shifts = [tuple(float(v) for v in s.split(",")) for s in args.shifts.split(";")]
    print(f"{args.size}x{args.size} pairs, beta={args.beta}, {args.epochs} epochs")
    print(f"{'shift':>14} {'rmse_px':>10} {'final_loss':>12} {'seconds':>8}")
    for shift in shifts:
        rmse, loss, secs = run_case(shift, args)
        label = f"({shift[0]:.1f},{shift[1]:.1f})"
        print(f"{label:>14} {rmse:>10.4f} {loss:>12.3e} {secs:>8.1f}")


if __name__ == "__main__":
    main()

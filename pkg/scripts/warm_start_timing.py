#!/usr/bin/env python3
"""Warm-start vs cold-start cost on a rotating sequence.

Trains a warm-started chain over a synthetic rigid-rotation sequence,
then retrains each later pair from scratch and counts how many epochs
the cold run needs to reach the warm run's final loss. The epoch ratio
is the speedup the warm start buys at matched quality.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from flowfit import (
    ModelConfig,
    RigidRotation,
    TrainConfig,
    forward_batch,
    generate_sequence,
    init_model,
    train_pair,
    train_sequence,
)


def point_rmse(model, particle_set, flow):
    pts = particle_set.positions
    dx, dy = flow.displacement(pts[:, 0], pts[:, 1])
    pred = forward_batch(model, pts)
    err = np.hypot(pred[:, 0] - dx, pred[:, 1] - dy)
    return float(np.sqrt(np.mean(err**2)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--angle", type=float, default=0.015, help="radians per frame")
    ap.add_argument("--epochs-first", type=int, default=60)
    ap.add_argument("--epochs-rest", type=int, default=20)
    ap.add_argument("--cold-budget", type=int, default=120)
    args = ap.parse_args()

    c = (args.size - 1) / 2.0
    seq = generate_sequence(
        RigidRotation(args.angle, c, c),
        args.frames,
        shape=(args.size, args.size),
        seed=7,
    )
    model_cfg = ModelConfig(beta=100.0, n_embed=64, layer_size=64)
    first = TrainConfig(lr=2e-3, batch_size=8192, epochs=args.epochs_first, seed=0,
                        deterministic=True)
    rest = replace(first, epochs=args.epochs_rest)

    start = time.time()
    results = train_sequence(seq.frames, first, rest, init_model(model_cfg, seed=0))
    warm_time = time.time() - start
    print(f"warm chain: {len(results)} pairs in {warm_time:.1f}s "
          f"({args.epochs_first} + {len(results) - 1}x{args.epochs_rest} epochs)")

    print(f"{'pair':>5} {'warm_rmse':>10} {'warm_loss':>11} {'cold_epochs':>12} {'ratio':>7}")
    for i, (model, report) in enumerate(results):
        rmse = point_rmse(model, seq.particle_sets[i], seq.flows[i])
        if i == 0:
            print(f"{i:>5} {rmse:>10.3f} {report.final_loss:>11.3e} {'(cold)':>12} {'':>7}")
            continue
        cold = train_pair(
            init_model(model_cfg, seed=0),
            seq.frames[i],
            seq.frames[i + 1],
            replace(first, epochs=args.cold_budget),
        )
        reached = next(
            (e + 1 for e, loss in enumerate(cold.loss_per_epoch) if loss <= report.final_loss),
            None,
        )
        shown = reached if reached is not None else f">{args.cold_budget}"
        ratio = (reached or args.cold_budget) / args.epochs_rest
        print(f"{i:>5} {rmse:>10.3f} {report.final_loss:>11.3e} {shown:>12} {ratio:>7.1f}")


if __name__ == "__main__":
    main()

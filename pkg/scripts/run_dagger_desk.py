#!/usr/bin/env python3
"""Desk-scale DAgger experiment.

Runs the aggregation loop at a size that finishes on a laptop, prints the
per-iteration RMSE trend, and leaves checkpoints, the report, and
trajectory CSVs for plotting under --out.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nnmpc import evaluation, imitation, mlp  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/dagger_desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=5)
    args = ap.parse_args()

    cfg = imitation.DaggerConfig(
        initial_train_size=4000, initial_val_size=1000,
        iterations=args.iterations,
        added_train_per_iter=800, added_val_per_iter=200,
        rollout_steps=100, eval_n_sims=20, eval_steps=100,
        seed=args.seed)

    os.makedirs(args.out, exist_ok=True)

    def checkpoint(k, params):
        mlp.save_params(params, os.path.join(args.out, f"model_iter_{k:02d}.bin"))

    params, report = imitation.dagger(cfg, checkpoint_fn=checkpoint)
    with open(os.path.join(args.out, "dagger_report.json"), "w") as f:
        json.dump(report.as_dict(), f, indent=2, sort_keys=True)

    print("iteration  train_size  rmse")
    for e in report.entries:
        print(f"{e['iteration']:>9}  {e['train_size']:>10}  {e['rmse']:.4f}")

    # trajectory data for inside/outside-bound comparison plots
    eval_cfg = evaluation.EvalConfig(n_sims=4, steps=100, regime="mixed",
                                     seed=args.seed, mpc_cfg=cfg.mpc_cfg)
    result = evaluation.evaluate(params, eval_cfg)
    trajs = []
    for e, n in zip(result.expert_trajectories, result.neural_trajectories):
        trajs.extend([(e, "mpc"), (n, "neural")])
    evaluation.export_trajectories(trajs, os.path.join(args.out, "trajectories"))
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Behavioral-cloning distribution-shift experiment, desk scale.

Trains a cloning model on inside-bound expert data only, then evaluates it
separately on inside-bound and outside-bound start states. The outside
RMSE is expected to be much worse: one off-distribution prediction sends
the policy into states the training data never covered.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nnmpc import evaluation, imitation, mlp  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/bc_shift")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-sims", type=int, default=400)
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()

    cfg = imitation.BcConfig(n_sims=args.n_sims, steps_per_sim=args.steps,
                             regime="inside", seed=args.seed)
    params, report = imitation.behavioral_clone(cfg)

    os.makedirs(args.out, exist_ok=True)
    mlp.save_params(params, os.path.join(args.out, "model.bin"))

    results = {}
    for regime in ("inside", "outside"):
        eval_cfg = evaluation.EvalConfig(n_sims=20, steps=args.steps,
                                         regime=regime, seed=args.seed,
                                         mpc_cfg=cfg.mpc_cfg)
        res = evaluation.evaluate(params, eval_cfg)
        results[regime] = {"rmse": res.rmse_overall,
                           "divergences": res.divergence_count}
        print(f"{regime:>8}: RMSE {res.rmse_overall:.4f} "
              f"({res.divergence_count} diverged rollouts)")

    report["shift_eval"] = results
    with open(os.path.join(args.out, "bc_shift_report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()

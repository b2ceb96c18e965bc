"""Command-line entry point.

Subcommands:
    generate  -- expert dataset CSV + generation report
    bc        -- behavioral cloning: model file + training report
    dagger    -- aggregation loop: per-iteration checkpoints + report
    eval      -- closed-loop evaluation: report + trajectory CSVs

Every command writes its outputs under --out together with a manifest and
echoes its fully resolved config into the report, so a run is reproducible
from the report alone. Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 I/O error.
"""

import argparse
import datetime
import json
import os
import sys

from . import data, evaluation, imitation, mlp
from .config import RunConfig
from .errors import (ConfigError, DivergenceError, NnmpcError, NumericalFailure,
                     WeightsFormatError, WeightsShapeError, WeightsVersionError)
from .imitation import _config_echo

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _limit_threads(n: int | None):
    # computation is vectorized numpy; the flag caps BLAS pools only
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        pass


def _write_json(doc: dict, path):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_manifest(out_dir, command: str, files: list, config_echo: dict):
    _write_json({"command": command,
                 "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                 "files": sorted(files),
                 "config": config_echo},
                os.path.join(out_dir, "manifest.json"))


def _load_run_config(args) -> RunConfig:
    rc = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        rc.seed = args.seed
    if args.out is not None:
        rc.out_dir = args.out
    return rc


def cmd_generate(args) -> int:
    rc = _load_run_config(args)
    gen = rc.generate
    n_sims = args.n_sims if args.n_sims is not None else gen.n_sims
    steps = args.steps if args.steps is not None else gen.steps
    regime = args.regime if args.regime is not None else gen.regime
    dataset, report = data.generate_expert_dataset(n_sims, steps, regime,
                                                   rc.mpc_cfg, rc.seed)
    os.makedirs(rc.out_dir, exist_ok=True)
    csv_path = os.path.join(rc.out_dir, "dataset.csv")
    data.save_csv(dataset, csv_path)
    echo = report.as_dict()
    echo["config"] = {"mpc": _config_echo(rc.mpc_cfg), "seed": rc.seed,
                      "n_sims": n_sims, "steps": steps, "regime": regime}
    _write_json(echo, os.path.join(rc.out_dir, "generation_report.json"))
    _write_manifest(rc.out_dir, "generate",
                    ["dataset.csv", "generation_report.json"], echo["config"])
    print(f"wrote {len(dataset)} samples to {csv_path} "
          f"({report.n_divergences} divergences)")
    return EXIT_OK


def cmd_bc(args) -> int:
    rc = _load_run_config(args)
    overrides = dict(rc.bc_raw)
    if args.perturb_sigma is not None:
        overrides["perturb_sigma"] = args.perturb_sigma
    if args.relabel is not None:
        overrides["relabel"] = args.relabel
    if args.n_sims is not None:
        overrides["n_sims"] = args.n_sims
    if args.steps is not None:
        overrides["steps_per_sim"] = args.steps
    cfg = imitation.BcConfig(mpc_cfg=rc.mpc_cfg, train_cfg=rc.train_config(),
                             seed=rc.seed, **overrides)
    dataset = data.load_csv(args.dataset) if args.dataset else None
    params, report = imitation.behavioral_clone(cfg, dataset=dataset)
    os.makedirs(rc.out_dir, exist_ok=True)
    model_path = os.path.join(rc.out_dir, "model.bin")
    mlp.save_params(params, model_path)
    _write_json(report, os.path.join(rc.out_dir, "bc_report.json"))
    _write_manifest(rc.out_dir, "bc", ["model.bin", "bc_report.json"],
                    report["config"])
    print(f"trained BC model -> {model_path}; "
          f"val losses {['%.5f' % v for v in report['val_losses']]}")
    return EXIT_OK


def cmd_dagger(args) -> int:
    rc = _load_run_config(args)
    overrides = dict(rc.dagger_raw)
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    cfg = imitation.DaggerConfig(mpc_cfg=rc.mpc_cfg, train_cfg=rc.train_config(),
                                 seed=rc.seed, **overrides)
    os.makedirs(rc.out_dir, exist_ok=True)
    files = []

    def save_checkpoint(k, params):
        name = f"model_iter_{k:02d}.bin"
        mlp.save_params(params, os.path.join(rc.out_dir, name))
        files.append(name)

    def save_datasets(k, train_pool, val_pool):
        for tag, pool in (("train", train_pool), ("val", val_pool)):
            name = f"dataset_iter_{k:02d}_{tag}.csv"
            data.save_csv(pool, os.path.join(rc.out_dir, name))
            files.append(name)

    params, report = imitation.dagger(
        cfg, checkpoint_fn=save_checkpoint,
        dataset_fn=save_datasets if args.save_datasets else None)
    _write_json(report.as_dict(), os.path.join(rc.out_dir, "dagger_report.json"))
    files.append("dagger_report.json")
    _write_manifest(rc.out_dir, "dagger", files, report.config)
    trend = ", ".join(f"{r:.4f}" for r in report.rmse_trend())
    print(f"dagger finished; RMSE by iteration: {trend}")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = _load_run_config(args)
    overrides = dict(rc.eval_raw)
    if args.n_sims is not None:
        overrides["n_sims"] = args.n_sims
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.regime is not None:
        overrides["regime"] = args.regime
    if args.pairing is not None:
        overrides["pairing"] = args.pairing
    cfg = evaluation.EvalConfig(mpc_cfg=rc.mpc_cfg, seed=rc.seed, **overrides)
    params = mlp.load_params(args.model)
    result = evaluation.evaluate(params, cfg)
    os.makedirs(rc.out_dir, exist_ok=True)
    echo = _config_echo(cfg)
    _write_json(result.as_dict(config_echo=echo),
                os.path.join(rc.out_dir, "eval_report.json"))
    trajs = []
    for e, n in zip(result.expert_trajectories, result.neural_trajectories):
        trajs.append((e, "mpc"))
        trajs.append((n, "neural"))
    traj_dir = os.path.join(rc.out_dir, "trajectories")
    manifest = evaluation.export_trajectories(trajs, traj_dir, configs=echo)
    _write_manifest(rc.out_dir, "eval",
                    ["eval_report.json"] + [f"trajectories/{f}" for f in manifest["files"]],
                    echo)
    print(f"pooled RMSE {result.rmse_overall:.5f} over {cfg.n_sims} sims "
          f"({result.divergence_count} divergences)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnmpc",
        description="Approximate an MPC with a neural network via BC and DAgger.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")
        p.add_argument("--threads", type=int, help="cap BLAS worker threads")

    p = sub.add_parser("generate", help="generate an expert dataset")
    common(p)
    p.add_argument("--n-sims", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--regime", choices=["inside", "outside", "mixed"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bc", help="behavioral cloning")
    common(p)
    p.add_argument("--dataset", help="train from an existing dataset CSV")
    p.add_argument("--n-sims", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--perturb-sigma", type=float)
    p.add_argument("--relabel", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_bc)

    p = sub.add_parser("dagger", help="run the DAgger loop")
    common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--save-datasets", action="store_true")
    p.set_defaults(func=cmd_dagger)

    p = sub.add_parser("eval", help="evaluate a model against the expert")
    common(p)
    p.add_argument("--model", required=True, help="weights file from bc/dagger")
    p.add_argument("--n-sims", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--regime", choices=["inside", "outside", "mixed"])
    p.add_argument("--pairing", choices=[evaluation.PAIR_EXPERT_ON_NEURAL,
                                         evaluation.PAIR_INDEPENDENT])
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (WeightsFormatError, WeightsVersionError, WeightsShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NnmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

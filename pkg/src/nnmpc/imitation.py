"""Imitation learning drivers: behavioral cloning and DAgger.

Behavioral cloning trains once on expert-generated data and never sees the
states its own policy visits. DAgger alternates: roll out the current
policy, label the visited states with the expert, aggregate into the pool,
retrain from fresh initialization, and evaluate -- shrinking the gap
between the training distribution and the one the policy induces.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data, evaluation, mlp, mpc, plant
from .seeding import derive_seed


@dataclass(frozen=True)
class BcConfig:
    n_sims: int = 1600
    steps_per_sim: int = 250
    regime: str = plant.INSIDE
    train_fraction: float = 0.8
    perturb_sigma: float | None = None  # Gaussian std applied to every component
    relabel: bool = True                # fresh expert labels for perturbed states
    mpc_cfg: mpc.MpcConfig = field(default_factory=mpc.MpcConfig)
    train_cfg: mlp.TrainConfig = field(default_factory=mlp.TrainConfig)
    seed: int = 0


def _config_echo(cfg) -> dict:
    echo = asdict(cfg)

    def scrub(obj):
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items() if k != "bounds"}
        if isinstance(obj, (list, tuple)):
            return [scrub(v) for v in obj]
        return obj

    return scrub(echo)


def behavioral_clone(cfg: BcConfig, dataset: data.Dataset | None = None):
    """Generate (or take) an expert dataset, split, train once.

    Returns (MlpParams, report dict).
    """
    report = {"config": _config_echo(cfg)}
    if dataset is None:
        dataset, gen_report = data.generate_expert_dataset(
            cfg.n_sims, cfg.steps_per_sim, cfg.regime, cfg.mpc_cfg,
            derive_seed(cfg.seed, "bc/generate"))
        report["generation"] = gen_report.as_dict()
    if cfg.perturb_sigma is not None:
        dataset = data.perturb_states(dataset, cfg.perturb_sigma, cfg.mpc_cfg,
                                      derive_seed(cfg.seed, "bc/perturb"),
                                      relabel=cfg.relabel)
    train_set, val_set = data.split(dataset, cfg.train_fraction,
                                    derive_seed(cfg.seed, "bc/split"))
    params = mlp.init_params(derive_seed(cfg.seed, "bc/init"))
    params, history = mlp.train(params, train_set.states, train_set.controls,
                                val_set.states, val_set.controls, cfg.train_cfg)
    report.update(train_size=len(train_set), val_size=len(val_set),
                  train_losses=history.train_losses,
                  val_losses=history.val_losses,
                  best_epoch=history.best_epoch)
    return params, report


@dataclass(frozen=True)
class DaggerConfig:
    initial_train_size: int = 40000
    initial_val_size: int = 10000
    iterations: int = 10
    added_train_per_iter: int = 8000
    added_val_per_iter: int = 2000
    rollout_steps: int = 250
    rollout_regime: str = "mixed"  # start states for policy rollouts
    eval_n_sims: int = 200
    eval_steps: int = 250
    retry_cap: int = 10            # extra rollout batches allowed per quota
    fine_tune: bool = False        # default: retrain from fresh init each iteration
    mpc_cfg: mpc.MpcConfig = field(default_factory=mpc.MpcConfig)
    train_cfg: mlp.TrainConfig = field(default_factory=mlp.TrainConfig)
    seed: int = 0

    def __post_init__(self):
        for name in ("initial_train_size", "initial_val_size", "iterations",
                     "added_train_per_iter", "added_val_per_iter", "rollout_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class DaggerReport:
    entries: list = field(default_factory=list)  # iteration 0 first
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"config": self.config, "iterations": self.entries}

    def rmse_trend(self) -> list:
        return [e["rmse"] for e in self.entries]


def _collect_expert_pool(total: int, cfg: DaggerConfig, seed: int) -> data.Dataset:
    """Expert samples for D0, topping up after divergence losses."""
    pools = []
    have = 0
    for attempt in range(cfg.retry_cap + 1):
        need = total - have
        if need <= 0:
            break
        n_sims = math.ceil(need / cfg.rollout_steps)
        d, _ = data.generate_expert_dataset(
            n_sims, cfg.rollout_steps, cfg.rollout_regime, cfg.mpc_cfg,
            derive_seed(seed, f"d0/attempt{attempt}"))
        pools.append(d)
        have += len(d)
    merged = pools[0]
    for d in pools[1:]:
        merged = data.aggregate(d1=merged, d2=d)
    return data.Dataset(merged.states[:total], merged.controls[:total],
                        data.PROV_EXPERT)


def _collect_policy_states(params: mlp.MlpParams, quota: int, cfg: DaggerConfig,
                           seed: int):
    """Run the current policy to gather `quota` visited states.

    Divergence-truncated rollouts contribute what they collected (those are
    exactly the informative off-distribution states); shortfalls are topped
    up with fresh rollouts until quota or the retry cap.
    """
    chunks = []
    have = 0
    divergences = 0
    for attempt in range(cfg.retry_cap + 1):
        need = quota - have
        if need <= 0:
            break
        n_sims = math.ceil(need / cfg.rollout_steps)
        x0 = data._start_states(n_sims, cfg.rollout_regime,
                                derive_seed(seed, f"rollouts/attempt{attempt}"))
        batch = evaluation.policy_rollout_batch(params, x0, cfg.rollout_steps,
                                                cfg.mpc_cfg.dt, cfg.mpc_cfg.bounds)
        for b in range(n_sims):
            chunks.append(batch.states[b, :batch.n_samples[b]])
        divergences += int(batch.diverged.sum())
        have += int(batch.n_samples.sum())
    states = np.concatenate(chunks)[:quota]
    return states, divergences, max(0, quota - states.shape[0])


def _train_fresh(train_pool, val_pool, cfg: DaggerConfig, iteration: int,
                 prev: mlp.MlpParams | None):
    if cfg.fine_tune and prev is not None:
        params = prev
    else:
        params = mlp.init_params(derive_seed(cfg.seed, f"init/iter{iteration}"))
    train_cfg = mlp.TrainConfig(**{**asdict(cfg.train_cfg),
                                   "seed": derive_seed(cfg.seed, f"train/iter{iteration}")})
    return mlp.train(params, train_pool.states, train_pool.controls,
                     val_pool.states, val_pool.controls, train_cfg)


def dagger(cfg: DaggerConfig, checkpoint_fn=None, dataset_fn=None):
    """Run the full aggregation loop; returns (final MlpParams, DaggerReport).

    checkpoint_fn(iteration, params) and dataset_fn(iteration, train_pool,
    val_pool), when given, are called after each iteration's training so the
    CLI can persist checkpoints and dataset snapshots.
    """
    report = DaggerReport(config=_config_echo(cfg))
    eval_cfg = evaluation.EvalConfig(
        n_sims=cfg.eval_n_sims, steps=cfg.eval_steps, regime="mixed",
        seed=derive_seed(cfg.seed, "eval"), mpc_cfg=cfg.mpc_cfg)

    expert_ref = evaluation.expert_reference(eval_cfg)

    d0 = _collect_expert_pool(cfg.initial_train_size + cfg.initial_val_size,
                              cfg, cfg.seed)
    perm = np.random.default_rng(derive_seed(cfg.seed, "d0/split")).permutation(len(d0))
    tr, va = perm[:cfg.initial_train_size], perm[cfg.initial_train_size:]
    train_pool = data.Dataset(d0.states[tr], d0.controls[tr], data.PROV_EXPERT)
    val_pool = data.Dataset(d0.states[va], d0.controls[va], data.PROV_EXPERT)

    params, history = _train_fresh(train_pool, val_pool, cfg, 0, None)
    result = evaluation.evaluate(params, eval_cfg, expert_batch=expert_ref)
    report.entries.append({
        "iteration": 0, "train_size": len(train_pool), "val_size": len(val_pool),
        "train_losses": history.train_losses, "val_losses": history.val_losses,
        "best_epoch": history.best_epoch, "rmse": result.rmse_overall,
        "eval_divergences": result.divergence_count,
        "rollout_divergences": 0, "shortfall": 0})
    if checkpoint_fn is not None:
        checkpoint_fn(0, params)
    if dataset_fn is not None:
        dataset_fn(0, train_pool, val_pool)

    for k in range(1, cfg.iterations + 1):
        quota = cfg.added_train_per_iter + cfg.added_val_per_iter
        states, divergences, shortfall = _collect_policy_states(
            params, quota, cfg, derive_seed(cfg.seed, f"collect/iter{k}"))
        labels = data.label_states(states, cfg.mpc_cfg)
        d_pi = data.Dataset(states, labels, data.prov_dagger(k))

        # shuffle before the train/val cut so one rollout does not land whole
        perm = np.random.default_rng(
            derive_seed(cfg.seed, f"split/iter{k}")).permutation(len(d_pi))
        n_tr = min(cfg.added_train_per_iter, len(d_pi))
        tr, va = perm[:n_tr], perm[n_tr:]
        train_pool = data.aggregate(train_pool, data.Dataset(
            d_pi.states[tr], d_pi.controls[tr], d_pi.provenance))
        val_pool = data.aggregate(val_pool, data.Dataset(
            d_pi.states[va], d_pi.controls[va], d_pi.provenance))

        params, history = _train_fresh(train_pool, val_pool, cfg, k, params)
        result = evaluation.evaluate(params, eval_cfg, expert_batch=expert_ref)
        report.entries.append({
            "iteration": k, "train_size": len(train_pool), "val_size": len(val_pool),
            "train_losses": history.train_losses, "val_losses": history.val_losses,
            "best_epoch": history.best_epoch, "rmse": result.rmse_overall,
            "eval_divergences": result.divergence_count,
            "rollout_divergences": divergences, "shortfall": shortfall})
        if checkpoint_fn is not None:
            checkpoint_fn(k, params)
        if dataset_fn is not None:
            dataset_fn(k, train_pool, val_pool)

    return params, report

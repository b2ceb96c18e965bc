"""Closed-loop evaluation of a learned policy against the MPC expert.

The headline metric is the pooled control RMSE

    sqrt( sum_i sum_{j in {1,2}} (true_u_ij - pred_u_ij)^2 / (2 n) )

over all steps of all evaluation simulations. By default true_u at a step
is the control the expert would issue AT THE STATE THE NETWORK VISITED
(the pointwise pairing that makes the difference well defined); the
alternative reading, differencing the controls of two independently
evolving rollouts step by step, is available via EvalConfig.pairing.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import data, mlp, mpc, plant
from .plant import CONTROL_DIM, STATE_DIM, Trajectory
from .seeding import derive_seed

PAIR_EXPERT_ON_NEURAL = "expert_on_neural_states"
PAIR_INDEPENDENT = "independent_trajectories"


@dataclass(frozen=True)
class EvalConfig:
    n_sims: int = 200
    steps: int = 250
    regime: str = "mixed"  # inside | outside | mixed (half and half)
    seed: int = 0
    mpc_cfg: mpc.MpcConfig = field(default_factory=mpc.MpcConfig)
    pairing: str = PAIR_EXPERT_ON_NEURAL

    def __post_init__(self):
        if self.n_sims < 1 or self.steps < 1:
            raise ValueError("n_sims and steps must be >= 1")
        if self.pairing not in (PAIR_EXPERT_ON_NEURAL, PAIR_INDEPENDENT):
            raise ValueError(f"unknown pairing {self.pairing!r}")


def rmse(true_controls, pred_controls) -> float:
    t = np.asarray(true_controls, dtype=float).reshape(-1, CONTROL_DIM)
    p = np.asarray(pred_controls, dtype=float).reshape(-1, CONTROL_DIM)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.shape[0] < 1:
        raise ValueError("need at least one sample")
    d = t - p
    return float(np.sqrt(np.sum(d * d) / (2.0 * t.shape[0])))


def as_policy(model):
    """Normalize a model to a callable states (B,4) -> raw controls (B,2)."""
    if callable(model):
        return model
    if isinstance(model, mlp.MlpParams):
        return lambda xs: mlp.forward_raw(model, xs)
    raise TypeError(f"cannot use {type(model).__name__} as a policy")


def policy_rollout_batch(model, x0: np.ndarray, steps: int, dt: float,
                         bounds: plant.Bounds = plant.DEFAULT_BOUNDS) -> mpc.RolloutBatch:
    """Closed-loop rollouts driven by the (clamped) policy, in lockstep."""
    policy = as_policy(model)
    x0 = np.asarray(x0, dtype=float).reshape(-1, STATE_DIM)
    b = x0.shape[0]
    states = np.zeros((b, steps + 1, STATE_DIM))
    controls = np.zeros((b, steps, CONTROL_DIM))
    n_samples = np.zeros(b, dtype=int)
    alive = ~plant.diverged(x0)
    x = x0.copy()
    for t in range(steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        u = plant.clamp_control(np.asarray(policy(x[idx])).reshape(idx.size, CONTROL_DIM),
                                bounds)
        states[idx, t] = x[idx]
        controls[idx, t] = u
        n_samples[idx] += 1
        with np.errstate(over="ignore", invalid="ignore"):
            xn = plant.rk4_step(x[idx], u, dt)
        dead = plant.diverged(xn)
        ok = ~dead
        x[idx[ok]] = xn[ok]
        states[idx[ok], t + 1] = xn[ok]
        alive[idx[dead]] = False
    return mpc.RolloutBatch(dt=dt, states=states, controls=controls,
                            n_samples=n_samples, diverged=~alive)


@dataclass
class PairedRollout:
    expert: Trajectory
    neural: Trajectory
    expert_controls_on_neural_states: np.ndarray  # (n, 2), n = common length
    neural_controls: np.ndarray                   # (n, 2)
    diverged: bool


def paired_rollout(s0, model, steps: int, mpc_cfg: mpc.MpcConfig) -> PairedRollout:
    """Expert and network rollouts from the same start, plus the expert's
    control at every state the network visited; records truncated to the
    shorter run when either side diverges."""
    x0 = plant._as_state(s0)[None, :]
    expert_batch = mpc.expert_rollout_batch(x0, steps, mpc_cfg)
    neural_batch = policy_rollout_batch(model, x0, steps, mpc_cfg.dt, mpc_cfg.bounds)
    diverged = bool(expert_batch.diverged[0] or neural_batch.diverged[0])
    n = int(min(expert_batch.n_samples[0], neural_batch.n_samples[0]))
    neural_states = neural_batch.states[0, :n]
    labels = data.label_states(neural_states, mpc_cfg) if n else np.zeros((0, CONTROL_DIM))
    return PairedRollout(
        expert=Trajectory(mpc_cfg.dt, expert_batch.states[0, :n + 1],
                          expert_batch.controls[0, :n]),
        neural=Trajectory(mpc_cfg.dt, neural_batch.states[0, :n + 1],
                          neural_batch.controls[0, :n]),
        expert_controls_on_neural_states=labels,
        neural_controls=neural_batch.controls[0, :n].copy(),
        diverged=diverged)


@dataclass
class EvalResult:
    rmse_overall: float
    per_sim: list            # dicts: {"n": int, "rmse": float, "diverged": bool}
    divergence_count: int
    expert_trajectories: list
    neural_trajectories: list

    def as_dict(self, config_echo: dict | None = None) -> dict:
        out = {"rmse_overall": self.rmse_overall,
               "divergence_count": self.divergence_count,
               "per_sim": self.per_sim}
        if config_echo is not None:
            out["config"] = config_echo
        return out


def expert_reference(cfg: EvalConfig) -> mpc.RolloutBatch:
    """The expert side of an evaluation; depends only on cfg, so callers
    that evaluate many models under one config can compute it once."""
    x0 = data._start_states(cfg.n_sims, cfg.regime, derive_seed(cfg.seed, "eval"))
    return mpc.expert_rollout_batch(x0, cfg.steps, cfg.mpc_cfg)


def evaluate(model, cfg: EvalConfig,
             expert_batch: mpc.RolloutBatch | None = None) -> EvalResult:
    """Run cfg.n_sims paired simulations and pool the control RMSE."""
    x0 = data._start_states(cfg.n_sims, cfg.regime, derive_seed(cfg.seed, "eval"))
    if expert_batch is None:
        expert_batch = mpc.expert_rollout_batch(x0, cfg.steps, cfg.mpc_cfg)
    neural_batch = policy_rollout_batch(model, x0, cfg.steps, cfg.mpc_cfg.dt,
                                        cfg.mpc_cfg.bounds)

    lengths = np.minimum(expert_batch.n_samples, neural_batch.n_samples)
    if cfg.pairing == PAIR_EXPERT_ON_NEURAL:
        # label every visited network state with a fresh (cold) expert solve
        flat_states = np.concatenate(
            [neural_batch.states[b, :lengths[b]] for b in range(cfg.n_sims)])
        flat_true = data.label_states(flat_states, cfg.mpc_cfg) \
            if flat_states.shape[0] else np.zeros((0, CONTROL_DIM))
    else:
        flat_true = np.concatenate(
            [expert_batch.controls[b, :lengths[b]] for b in range(cfg.n_sims)])
    flat_pred = np.concatenate(
        [neural_batch.controls[b, :lengths[b]] for b in range(cfg.n_sims)])

    per_sim = []
    offset = 0
    sq_total = 0.0
    diverged_flags = expert_batch.diverged | neural_batch.diverged
    for b in range(cfg.n_sims):
        n = int(lengths[b])
        d = flat_true[offset:offset + n] - flat_pred[offset:offset + n]
        sq = float(np.sum(d * d))
        sq_total += sq
        per_sim.append({"n": n,
                        "rmse": float(np.sqrt(sq / (2.0 * n))) if n else None,
                        "diverged": bool(diverged_flags[b])})
        offset += n
    total_n = int(lengths.sum())
    overall = float(np.sqrt(sq_total / (2.0 * total_n))) if total_n else float("nan")

    return EvalResult(
        rmse_overall=overall, per_sim=per_sim,
        divergence_count=int(diverged_flags.sum()),
        expert_trajectories=[expert_batch.trajectory(b) for b in range(cfg.n_sims)],
        neural_trajectories=[neural_batch.trajectory(b) for b in range(cfg.n_sims)])


def write_trajectory_csv(traj: Trajectory, source: str, path):
    """Columns t,y,v,theta,gamma,u1,u2,source; the final state row has no control."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "y", "v", "theta", "gamma", "u1", "u2", "source"])
        for k, x in enumerate(traj.states):
            u = traj.controls[k] if k < len(traj) else None
            writer.writerow([format(k * traj.dt, ".17g"),
                             *(format(v, ".17g") for v in x),
                             *(("", "") if u is None
                               else (format(u[0], ".17g"), format(u[1], ".17g"))),
                             source])


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv; returns (Trajectory, source)."""
    states, controls, times, source = [], [], [], None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            times.append(float(row[0]))
            states.append([float(v) for v in row[1:5]])
            if row[5] != "":
                controls.append([float(v) for v in row[5:7]])
            source = row[7]
    dt = times[1] - times[0] if len(times) > 1 else 1.0
    return Trajectory(dt, np.asarray(states), np.asarray(controls)), source


def export_trajectories(trajectories, out_dir, configs: dict | None = None,
                        manifest_extra: dict | None = None):
    """Write (trajectory, source) pairs as CSVs plus a manifest JSON.

    Returns the manifest dict. `trajectories` is a sequence of
    (Trajectory, source) with source in {"mpc", "neural"}.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for i, (traj, source) in enumerate(trajectories):
        name = f"trajectory_{i:04d}_{source}.csv"
        write_trajectory_csv(traj, source, os.path.join(out_dir, name))
        files.append(name)
    manifest = {"files": files, "configs": configs or {}}
    manifest.update(manifest_extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest

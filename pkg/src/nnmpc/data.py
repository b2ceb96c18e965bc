"""Datasets of expert-labeled (state, control) pairs.

Generation runs batched expert rollouts in lockstep (identical output to a
serial per-simulation loop, since the batched solver has no cross-element
coupling). CSV is the canonical on-disk format: header y,v,theta,gamma,u1,u2,
one sample per row, 17 significant digits for exact float64 round-trips.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import mpc, plant
from .errors import DatasetFormatError
from .seeding import derive_seed

CSV_HEADER = ["y", "v", "theta", "gamma", "u1", "u2"]

PROV_EXPERT = "expert_rollout"
PROV_PERTURBED = "perturbed"
PROV_AGGREGATED = "aggregated"


def prov_dagger(iteration: int) -> str:
    return f"dagger_iteration_{iteration}"


@dataclass(frozen=True)
class LabeledSample:
    state: plant.State
    control: plant.Control


@dataclass
class Dataset:
    states: np.ndarray    # (n, 4)
    controls: np.ndarray  # (n, 2)
    provenance: str

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, plant.STATE_DIM)
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1, plant.CONTROL_DIM)
        if self.states.shape[0] != self.controls.shape[0]:
            raise ValueError("states and controls must have equal length")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.controls))):
            raise ValueError("dataset entries must be finite")

    def __len__(self) -> int:
        return self.states.shape[0]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(plant.State.from_array(self.states[i]),
                             plant.Control.from_array(self.controls[i]))

    @classmethod
    def empty(cls, provenance: str = PROV_EXPERT) -> "Dataset":
        return cls(np.zeros((0, plant.STATE_DIM)), np.zeros((0, plant.CONTROL_DIM)),
                   provenance)


@dataclass
class GenerationReport:
    n_sims: int
    steps_per_sim: int
    regime: str
    seed: int
    n_samples: int
    n_divergences: int
    samples_lost: int
    config_echo: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"n_sims": self.n_sims, "steps_per_sim": self.steps_per_sim,
                "regime": self.regime, "seed": self.seed,
                "n_samples": self.n_samples, "n_divergences": self.n_divergences,
                "samples_lost": self.samples_lost, "config": self.config_echo}


def _start_states(n_sims: int, regime: str, seed: int) -> np.ndarray:
    """Mixed regime: first half inside-bound starts, second half outside."""
    if regime == "mixed":
        n_in = n_sims // 2 + n_sims % 2
        a = plant.sample_initial_states(n_in, plant.INSIDE,
                                        derive_seed(seed, "starts/inside"))
        b = plant.sample_initial_states(n_sims - n_in, plant.OUTSIDE,
                                        derive_seed(seed, "starts/outside"))
        return np.concatenate([a, b])
    return plant.sample_initial_states(n_sims, regime, derive_seed(seed, f"starts/{regime}"))


def generate_expert_dataset(n_sims: int, steps_per_sim: int, regime: str,
                            mpc_cfg: mpc.MpcConfig, seed: int):
    """Run n_sims expert rollouts; returns (Dataset, GenerationReport)."""
    if n_sims < 1 or steps_per_sim < 1:
        raise ValueError("n_sims and steps_per_sim must be >= 1")
    x0 = _start_states(n_sims, regime, seed)
    batch = mpc.expert_rollout_batch(x0, steps_per_sim, mpc_cfg)
    xs, us = batch.all_samples()
    report = GenerationReport(
        n_sims=n_sims, steps_per_sim=steps_per_sim, regime=regime, seed=seed,
        n_samples=xs.shape[0],
        n_divergences=int(batch.diverged.sum()),
        samples_lost=n_sims * steps_per_sim - xs.shape[0])
    return Dataset(xs, us, PROV_EXPERT), report


def label_states(states: np.ndarray, mpc_cfg: mpc.MpcConfig) -> np.ndarray:
    """Expert label (first MPC control) for every state, batched."""
    res = mpc.solve_batch(np.asarray(states, dtype=float), mpc_cfg)
    return res.first_control


def perturb_states(d: Dataset, sigma, mpc_cfg: mpc.MpcConfig, seed: int,
                   relabel: bool = True) -> Dataset:
    """Add zero-mean Gaussian noise to every state.

    With relabel (the default) each perturbed state gets a fresh expert
    label; otherwise the original controls are kept, which deliberately
    produces inconsistent data for studying the failure mode.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (plant.STATE_DIM,))
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(derive_seed(seed, "perturb"))
    states = d.states + rng.normal(0.0, 1.0, size=d.states.shape) * sigma
    controls = label_states(states, mpc_cfg) if relabel else d.controls.copy()
    return Dataset(states, controls, PROV_PERTURBED)


def aggregate(d1: Dataset, d2: Dataset) -> Dataset:
    return Dataset(np.concatenate([d1.states, d2.states]),
                   np.concatenate([d1.controls, d2.controls]),
                   PROV_AGGREGATED)


def split(d: Dataset, train_fraction: float, seed: int):
    """Seeded shuffle then disjoint, exhaustive split."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(derive_seed(seed, "split"))
    perm = rng.permutation(len(d))
    n_train = int(len(d) * train_fraction)
    tr, va = perm[:n_train], perm[n_train:]
    return (Dataset(d.states[tr], d.controls[tr], d.provenance),
            Dataset(d.states[va], d.controls[va], d.provenance))


def save_csv(d: Dataset, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for x, u in zip(d.states, d.controls):
            writer.writerow([format(v, ".17g") for v in (*x, *u)])


def load_csv(path, provenance: str = PROV_EXPERT) -> Dataset:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, expected header")
        if header != CSV_HEADER:
            raise DatasetFormatError(f"{path}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise DatasetFormatError(
                    f"{path}: row {lineno} has {len(row)} fields, expected 6")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DatasetFormatError(f"{path}: row {lineno} is not numeric")
            if not all(np.isfinite(v) for v in vals):
                raise DatasetFormatError(f"{path}: row {lineno} has non-finite value")
            rows.append(vals)
    arr = np.asarray(rows, dtype=float).reshape(-1, 6)
    return Dataset(arr[:, :4], arr[:, 4:], provenance)

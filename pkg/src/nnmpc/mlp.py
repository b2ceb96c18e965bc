"""From-scratch 4-512-512-2 feed-forward network.

tanh hidden layers, identity output. The raw output is what the loss sees;
control clamping happens only at inference (`policy`), so gradients never
die against the control box. Backprop, mini-batch Adam, and a versioned
little-endian float64 weight file are all implemented here in plain numpy.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (NumericalFailure, WeightsFormatError, WeightsShapeError,
                     WeightsVersionError)
from .plant import DEFAULT_BOUNDS, Bounds

LAYER_SIZES = (4, 512, 512, 2)

_MAGIC = b"NMLP"
_FORMAT_VERSION = 1


@dataclass
class MlpParams:
    """Weights and biases, layer i maps sizes[i] -> sizes[i+1]."""

    weights: list  # [W1 (512,4), W2 (512,512), W3 (2,512)]
    biases: list   # [b1 (512,), b2 (512,), b3 (2,)]

    def __post_init__(self):
        expected = list(zip(LAYER_SIZES[1:], LAYER_SIZES[:-1]))
        got = [w.shape for w in self.weights]
        if got != expected or [b.shape for b in self.biases] != [(n,) for n, _ in expected]:
            raise WeightsShapeError(f"expected layer shapes {expected}, got {got}")
        if not all(np.all(np.isfinite(a)) for a in self.weights + self.biases):
            raise ValueError("parameters must be finite")

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    # 64 keeps the fixed 5-epoch budget effective on small aggregated pools
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def init_params(seed: int) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward_raw(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Unclamped network output; x is (4,) or (n, 4)."""
    x = np.asarray(x, dtype=float)
    h = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.tanh(h @ w.T + b)
    return h @ p.weights[-1].T + p.biases[-1]


def forward(p: MlpParams, state, bounds: Bounds = DEFAULT_BOUNDS) -> np.ndarray:
    """Network control for a state, clamped into the control box."""
    from .plant import _as_state, clamp_control
    return clamp_control(forward_raw(p, _as_state(state)), bounds)


def loss_and_gradients(p: MlpParams, states: np.ndarray, controls: np.ndarray):
    """Batch MSE over the 2 outputs (squared-error sum / 2n) and its gradients."""
    x = np.asarray(states, dtype=float).reshape(-1, LAYER_SIZES[0])
    y = np.asarray(controls, dtype=float).reshape(-1, LAYER_SIZES[-1])
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    n = x.shape[0]

    h1 = np.tanh(x @ p.weights[0].T + p.biases[0])
    h2 = np.tanh(h1 @ p.weights[1].T + p.biases[1])
    out = h2 @ p.weights[2].T + p.biases[2]

    err = out - y
    loss = float(np.sum(err * err) / (2.0 * n))

    d_out = err / n                                   # (n, 2)
    gw3 = d_out.T @ h2
    gb3 = d_out.sum(axis=0)
    d_h2 = (d_out @ p.weights[2]) * (1.0 - h2 * h2)
    gw2 = d_h2.T @ h1
    gb2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ p.weights[1]) * (1.0 - h1 * h1)
    gw1 = d_h1.T @ x
    gb1 = d_h1.sum(axis=0)

    grads = MlpParams([gw1, gw2, gw3], [gb1, gb2, gb3])
    return loss, grads


class AdamState:
    def __init__(self, p: MlpParams):
        self.m = [np.zeros_like(a) for a in p.weights + p.biases]
        self.v = [np.zeros_like(a) for a in p.weights + p.biases]
        self.t = 0

    def update(self, p: MlpParams, grads: MlpParams, cfg: TrainConfig):
        self.t += 1
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        params = p.weights + p.biases
        gs = grads.weights + grads.biases
        for i, (a, g) in enumerate(zip(params, gs)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            a -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class TrainHistory:
    train_losses: list  # mean mini-batch loss per epoch
    val_losses: list    # full-validation loss per epoch
    best_epoch: int


def evaluate_loss(p: MlpParams, states, controls) -> float:
    x = np.asarray(states, dtype=float)
    y = np.asarray(controls, dtype=float)
    err = forward_raw(p, x) - y
    return float(np.sum(err * err) / (2.0 * x.shape[0]))


def train(p: MlpParams, train_states, train_controls, val_states, val_controls,
          cfg: TrainConfig):
    """Mini-batch Adam; returns (params from best-validation epoch, history)."""
    x = np.asarray(train_states, dtype=float)
    y = np.asarray(train_controls, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("training set must be nonempty")
    p = p.copy()
    adam = AdamState(p)
    rng = np.random.default_rng(cfg.seed)

    history = TrainHistory([], [], 0)
    best_val = np.inf
    best_params = p.copy()
    for epoch in range(cfg.epochs):
        perm = rng.permutation(x.shape[0])
        batch_losses = []
        for start in range(0, x.shape[0], cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(p, x[sel], y[sel])
            if not np.isfinite(loss):
                raise NumericalFailure(f"training loss became {loss} at epoch {epoch}")
            adam.update(p, grads, cfg)
            batch_losses.append(loss)
        val_loss = evaluate_loss(p, val_states, val_controls)
        if not np.isfinite(val_loss):
            raise NumericalFailure(f"validation loss became {val_loss} at epoch {epoch}")
        history.train_losses.append(float(np.mean(batch_losses)))
        history.val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = p.copy()
            history.best_epoch = epoch
    return best_params, history


def save_params(p: MlpParams, path):
    """magic | version u32 | n_layers u32 | (rows u32, cols u32)* | raw <f8 data."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _FORMAT_VERSION, len(p.weights)))
        for w in p.weights:
            f.write(struct.pack("<II", *w.shape))
        for w, b in zip(p.weights, p.biases):
            f.write(w.astype("<f8").tobytes())
            f.write(b.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as f:
        blob = f.read()

    def take(offset, count):
        if offset + count > len(blob):
            raise WeightsFormatError(f"{path}: truncated at byte {len(blob)}")
        return blob[offset:offset + count], offset + count

    raw, pos = take(0, 4)
    if raw != _MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {raw!r}")
    raw, pos = take(pos, 8)
    version, n_layers = struct.unpack("<II", raw)
    if version != _FORMAT_VERSION:
        raise WeightsVersionError(f"{path}: format version {version}, "
                                  f"expected {_FORMAT_VERSION}")
    shapes = []
    for _ in range(n_layers):
        raw, pos = take(pos, 8)
        shapes.append(struct.unpack("<II", raw))
    expected = list(zip(LAYER_SIZES[1:], LAYER_SIZES[:-1]))
    if shapes != expected:
        raise WeightsShapeError(f"{path}: layer shapes {shapes}, expected {expected}")

    weights, biases = [], []
    for rows, cols in shapes:
        raw, pos = take(pos, 8 * rows * cols)
        weights.append(np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy())
        raw, pos = take(pos, 8 * rows)
        biases.append(np.frombuffer(raw, dtype="<f8").copy())
    if pos != len(blob):
        raise WeightsFormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return MlpParams(weights, biases)

"""Kinematic bicycle plant: dynamics, RK4 stepping, bounds, start sampling.

State is (y, v, theta, gamma): lateral position, forward velocity,
rotational position, and the tangent of the angle between the front and
rear axles. Controls are (u1, u2): acceleration and steering angular
velocity.

The continuous dynamics used everywhere in this package are

    y'     = v * sin(theta)
    v'     = u1
    theta' = v * gamma
    gamma' = u2

with the wheelbase normalized to 1. This is an assumption documented in
the README: it is the minimal lane-keeping bicycle consistent with the
state and control roles above.

All functions are pure and accept batched arrays: states have shape
(..., 4) and controls (..., 2).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

STATE_DIM = 4
CONTROL_DIM = 2

STATE_NAMES = ("y", "v", "theta", "gamma")
CONTROL_NAMES = ("u1", "u2")

# Any state component beyond this magnitude counts as a diverged rollout.
DIVERGENCE_LIMIT = 1e6

INSIDE = "inside"
OUTSIDE = "outside"

# Inflation factor applied to the state box when sampling outside-bound starts.
OUTSIDE_INFLATION = 1.5


@dataclass(frozen=True)
class State:
    y: float
    v: float
    theta: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y, self.v, self.theta, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, x) -> "State":
        y, v, theta, gamma = np.asarray(x, dtype=float)
        return cls(float(y), float(v), float(theta), float(gamma))


@dataclass(frozen=True)
class Control:
    u1: float
    u2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=float)

    @classmethod
    def from_array(cls, u) -> "Control":
        u1, u2 = np.asarray(u, dtype=float)
        return cls(float(u1), float(u2))


def _box(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Bounds:
    state_low: np.ndarray = field(default_factory=lambda: _box([-2.0, -2.0, -1.0, -1.0]))
    state_high: np.ndarray = field(default_factory=lambda: _box([2.0, 2.0, 1.0, 1.0]))
    control_low: np.ndarray = field(default_factory=lambda: _box([-10.0, -10.0]))
    control_high: np.ndarray = field(default_factory=lambda: _box([10.0, 10.0]))

    def __post_init__(self):
        if not (np.all(self.state_low < self.state_high)
                and np.all(self.control_low < self.control_high)):
            raise ValueError("bounds must satisfy low < high componentwise")

    def state_inside(self, x) -> np.ndarray:
        """Strict inside-the-box predicate, batched over leading axes."""
        x = np.asarray(x, dtype=float)
        return np.all((x > self.state_low) & (x < self.state_high), axis=-1)


DEFAULT_BOUNDS = Bounds()


def _as_state(x) -> np.ndarray:
    if isinstance(x, State):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _as_control(u) -> np.ndarray:
    if isinstance(u, Control):
        return u.as_array()
    return np.asarray(u, dtype=float)


def dynamics(state, control) -> np.ndarray:
    """Right-hand side of the bicycle ODE; batched over leading axes."""
    x = _as_state(state)
    u = _as_control(control)
    out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (STATE_DIM,))
    v = x[..., 1]
    theta = x[..., 2]
    gamma = x[..., 3]
    out[..., 0] = v * np.sin(theta)
    out[..., 1] = u[..., 0]
    out[..., 2] = v * gamma
    out[..., 3] = u[..., 1]
    return out


def dynamics_jacobians(state) -> tuple[np.ndarray, np.ndarray]:
    """(d f/d state, d f/d control) at the given states; batched.

    The control Jacobian is constant but returned per-batch for uniformity.
    """
    x = _as_state(state)
    batch = x.shape[:-1]
    v = x[..., 1]
    theta = x[..., 2]
    gamma = x[..., 3]
    jx = np.zeros(batch + (STATE_DIM, STATE_DIM))
    jx[..., 0, 1] = np.sin(theta)
    jx[..., 0, 2] = v * np.cos(theta)
    jx[..., 2, 1] = gamma
    jx[..., 2, 3] = v
    ju = np.zeros(batch + (STATE_DIM, CONTROL_DIM))
    ju[..., 1, 0] = 1.0
    ju[..., 3, 1] = 1.0
    return jx, ju


def rk4_step(state, control, dt: float) -> np.ndarray:
    """One classical RK4 step with the control held constant (zero-order hold)."""
    x = _as_state(state)
    u = _as_control(control)
    k1 = dynamics(x, u)
    k2 = dynamics(x + 0.5 * dt * k1, u)
    k3 = dynamics(x + 0.5 * dt * k2, u)
    k4 = dynamics(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_with_jacobians(state, control, dt: float):
    """RK4 step plus its Jacobians wrt state and control.

    Returns (next_state, A, B) with A of shape (..., 4, 4) and B of
    shape (..., 4, 2); used by the adjoint gradient in the MPC solver.
    """
    x = _as_state(state)
    u = _as_control(control)
    h = dt

    def stage(xs, dk_dx_prev, dk_du_prev, coeff):
        jx, ju = dynamics_jacobians(xs)
        eye = np.eye(STATE_DIM)
        dk_dx = jx @ (eye + coeff * dk_dx_prev) if dk_dx_prev is not None else jx
        dk_du = ju + (jx @ (coeff * dk_du_prev) if dk_du_prev is not None else 0.0)
        return dk_dx, dk_du

    k1 = dynamics(x, u)
    dk1_dx, dk1_du = stage(x, None, None, 0.0)
    x2 = x + 0.5 * h * k1
    k2 = dynamics(x2, u)
    dk2_dx, dk2_du = stage(x2, dk1_dx, dk1_du, 0.5 * h)
    x3 = x + 0.5 * h * k2
    k3 = dynamics(x3, u)
    dk3_dx, dk3_du = stage(x3, dk2_dx, dk2_du, 0.5 * h)
    x4 = x + h * k3
    k4 = dynamics(x4, u)
    dk4_dx, dk4_du = stage(x4, dk3_dx, dk3_du, h)

    x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    a = np.eye(STATE_DIM) + (h / 6.0) * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx)
    b = (h / 6.0) * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du)
    return x_next, a, b


def step(state, control, dt: float) -> np.ndarray:
    """RK4 step that raises DivergenceError on any non-finite output."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x_next = rk4_step(state, control, dt)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError("integration produced a non-finite state")
    return x_next


def diverged(state) -> np.ndarray:
    """Divergence-guard predicate: non-finite or outside the safe box. Batched."""
    x = _as_state(state)
    bad = ~np.isfinite(x) | (np.abs(x) > DIVERGENCE_LIMIT)
    return np.any(bad, axis=-1)


def clamp_control(control, bounds: Bounds = DEFAULT_BOUNDS) -> np.ndarray:
    u = _as_control(control)
    return np.clip(u, bounds.control_low, bounds.control_high)


def _inflated_box(bounds: Bounds, factor: float):
    center = 0.5 * (bounds.state_low + bounds.state_high)
    half = 0.5 * (bounds.state_high - bounds.state_low) * factor
    return center - half, center + half


def sample_initial_states(n: int, regime: str, rng,
                          bounds: Bounds = DEFAULT_BOUNDS,
                          inflation: float = OUTSIDE_INFLATION) -> np.ndarray:
    """Sample n start states, shape (n, 4).

    INSIDE draws uniformly from the state box. OUTSIDE draws uniformly
    from the box inflated by `inflation` about its center and rejects
    draws that land entirely inside the base box.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if regime == INSIDE:
        return rng.uniform(bounds.state_low, bounds.state_high, size=(n, STATE_DIM))
    if regime != OUTSIDE:
        raise ValueError(f"unknown regime {regime!r}")
    low, high = _inflated_box(bounds, inflation)
    out = rng.uniform(low, high, size=(n, STATE_DIM))
    inside = bounds.state_inside(out)
    while np.any(inside):
        idx = np.flatnonzero(inside)
        out[idx] = rng.uniform(low, high, size=(len(idx), STATE_DIM))
        inside[idx] = bounds.state_inside(out[idx])
    return out


def sample_initial_state(regime: str, rng, bounds: Bounds = DEFAULT_BOUNDS,
                         inflation: float = OUTSIDE_INFLATION) -> np.ndarray:
    return sample_initial_states(1, regime, rng, bounds, inflation)[0]


@dataclass
class Trajectory:
    """Fixed-step record of a closed-loop run: T+1 states, T applied controls."""

    dt: float
    states: np.ndarray    # (T+1, 4)
    controls: np.ndarray  # (T, 2)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1, CONTROL_DIM)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.states.shape != (self.controls.shape[0] + 1, STATE_DIM):
            raise ValueError(
                f"need |states| = |controls| + 1, got {self.states.shape} "
                f"states and {self.controls.shape} controls")

    def __len__(self) -> int:
        return self.controls.shape[0]

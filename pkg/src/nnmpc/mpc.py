"""Receding-horizon expert controller.

At each plant state the expert minimizes a quadratic regulation cost to the
origin over a finite horizon of piecewise-constant controls, by projected
gradient descent with backtracking line search, and applies only the first
control of the optimized sequence.

The solver is written batch-first: `solve_batch` optimizes B independent
problems elementwise in lockstep (pure numpy, no cross-element coupling),
so batched and one-at-a-time results are identical. Gradients come from an
adjoint (reverse) sweep through the RK4 rollout by default; a central
finite-difference gradient is available via MpcConfig.gradient_mode and is
used by the tests to cross-check the adjoint.
"""

from dataclasses import dataclass, field

import numpy as np

from . import plant
from .errors import DivergenceError
from .plant import CONTROL_DIM, DEFAULT_BOUNDS, STATE_DIM, Bounds

ARMIJO_C = 1e-4
FD_EPS = 1e-5
_MIN_STEP = 1e-14
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 25
    dt: float = 0.02
    state_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    control_weights: tuple = (0.1, 0.1)
    terminal_weights: tuple = (10.0, 10.0, 10.0, 10.0)
    max_iters: int = 200
    grad_tol: float = 1e-4
    step_size: float = 0.1
    gradient_mode: str = "adjoint"  # or "fd"
    bounds: Bounds = field(default_factory=lambda: DEFAULT_BOUNDS)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if min(self.state_weights) < 0 or min(self.control_weights) < 0 \
                or min(self.terminal_weights) < 0:
            raise ValueError("weights must be nonnegative")
        if self.gradient_mode not in ("adjoint", "fd"):
            raise ValueError("gradient_mode must be 'adjoint' or 'fd'")

    def weight_arrays(self):
        return (np.asarray(self.state_weights, dtype=float),
                np.asarray(self.control_weights, dtype=float),
                np.asarray(self.terminal_weights, dtype=float))


@dataclass
class SolveResult:
    """Batched solver output; index b is problem b."""

    first_control: np.ndarray  # (B, 2)
    controls: np.ndarray       # (B, N, 2)
    cost: np.ndarray           # (B,)
    diverged: np.ndarray       # (B,) True where every rollout from x0 diverges
    iterations: np.ndarray     # (B,)


def _cost_batch(x0: np.ndarray, u: np.ndarray, cfg: MpcConfig):
    """Rollout cost for B problems. Returns (cost, dead) with cost=inf where dead."""
    q, r, p = cfg.weight_arrays()
    b, n = u.shape[0], u.shape[1]
    x = x0.astype(float).copy()
    cost = np.zeros(b)
    dead = plant.diverged(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            uk = u[:, k]
            cost += ((x * x) @ q + (uk * uk) @ r) * cfg.dt
            xn = plant.rk4_step(x, uk, cfg.dt)
            newly_dead = ~dead & plant.diverged(xn)
            x = np.where((dead | newly_dead)[:, None], x, xn)
            dead |= newly_dead
        cost += (x * x) @ p
    cost[dead] = np.inf
    return cost, dead


def _cost_and_grad_adjoint(x0: np.ndarray, u: np.ndarray, cfg: MpcConfig):
    """Cost plus gradient wrt every control entry, via a reverse sweep."""
    q, r, p = cfg.weight_arrays()
    b, n = u.shape[0], u.shape[1]
    x = x0.astype(float).copy()
    cost = np.zeros(b)
    dead = plant.diverged(x)
    xs = np.empty((n + 1, b, STATE_DIM))
    a_mats = np.empty((n, b, STATE_DIM, STATE_DIM))
    b_mats = np.empty((n, b, STATE_DIM, CONTROL_DIM))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            xs[k] = x
            uk = u[:, k]
            cost += ((x * x) @ q + (uk * uk) @ r) * cfg.dt
            xn, a_mats[k], b_mats[k] = plant.rk4_step_with_jacobians(x, uk, cfg.dt)
            newly_dead = ~dead & plant.diverged(xn)
            x = np.where((dead | newly_dead)[:, None], x, xn)
            dead |= newly_dead
        xs[n] = x
        cost += (x * x) @ p

        grad = np.empty_like(u)
        lam = 2.0 * xs[n] * p
        for k in range(n - 1, -1, -1):
            grad[:, k] = 2.0 * cfg.dt * u[:, k] * r \
                + np.einsum("bsc,bs->bc", b_mats[k], lam)
            lam = 2.0 * cfg.dt * xs[k] * q + np.einsum("bsc,bs->bc", a_mats[k], lam)

    cost[dead] = np.inf
    grad[dead] = 0.0
    return cost, grad, dead


def _cost_and_grad_fd(x0: np.ndarray, u: np.ndarray, cfg: MpcConfig):
    """Central finite-difference gradient; O(2·N·2) rollouts, batched."""
    cost, dead = _cost_batch(x0, u, cfg)
    grad = np.zeros_like(u)
    n = u.shape[1]
    for k in range(n):
        for j in range(CONTROL_DIM):
            up = u.copy()
            up[:, k, j] += FD_EPS
            um = u.copy()
            um[:, k, j] -= FD_EPS
            cp, _ = _cost_batch(x0, up, cfg)
            cm, _ = _cost_batch(x0, um, cfg)
            grad[:, k, j] = (cp - cm) / (2.0 * FD_EPS)
    grad[dead] = 0.0
    return cost, grad, dead


def rollout_cost(s0, u, cfg: MpcConfig) -> float:
    """Cost of one control sequence from one start state."""
    x0 = plant._as_state(s0)[None, :]
    useq = np.asarray(u, dtype=float).reshape(1, -1, CONTROL_DIM)
    cost, dead = _cost_batch(x0, useq, cfg)
    if dead[0]:
        raise DivergenceError("rollout left the numeric safe box")
    return float(cost[0])


def solve_batch(x0: np.ndarray, cfg: MpcConfig,
                warm_start: np.ndarray | None = None) -> SolveResult:
    """Projected gradient descent on the rollout cost for B problems at once.

    Hitting max_iters is not an error: accepted iterates only ever decrease
    the cost, so the current iterate is the best one found.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1, STATE_DIM)
    b, n = x0.shape[0], cfg.horizon
    lo, hi = cfg.bounds.control_low, cfg.bounds.control_high

    if warm_start is None:
        u = np.zeros((b, n, CONTROL_DIM))
    else:
        u = np.clip(np.asarray(warm_start, dtype=float).reshape(b, n, CONTROL_DIM),
                    lo, hi)

    grad_fn = _cost_and_grad_adjoint if cfg.gradient_mode == "adjoint" \
        else _cost_and_grad_fd
    cost, grad, dead = grad_fn(x0, u, cfg)
    step = np.full(b, cfg.step_size)
    done = dead.copy()
    iters = np.zeros(b, dtype=int)
    # previous iterate/gradient for the spectral (Barzilai-Borwein) trial step
    u_prev = np.zeros_like(u)
    g_prev = np.zeros_like(grad)
    have_prev = np.zeros(b, dtype=bool)

    for _ in range(cfg.max_iters):
        pg = u - np.clip(u - grad, lo, hi)
        pg_norm = np.sqrt(np.einsum("bnc,bnc->b", pg, pg))
        done |= pg_norm < cfg.grad_tol
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        iters[idx] += 1

        # Trial step: BB1 where available (huge speedup on this quadratic-ish
        # cost), else the adaptive fallback; backtracking below keeps every
        # accepted iterate monotone regardless.
        ti = step[idx].copy()
        hp = np.flatnonzero(have_prev[idx])
        if hp.size:
            j = idx[hp]
            du = u[j] - u_prev[j]
            dg = grad[j] - g_prev[j]
            num = np.einsum("bnc,bnc->b", du, du)
            den = np.einsum("bnc,bnc->b", du, dg)
            good = den > 1e-30
            ti[hp[good]] = np.clip(num[good] / den[good], 1e-8, 1e4)

        # Per-problem backtracking: halve the step until Armijo decrease.
        ui, ci, gi, x0i = u[idx], cost[idx], grad[idx], x0[idx]
        accepted = np.zeros(idx.size, dtype=bool)
        new_u, new_c = ui.copy(), ci.copy()
        for _ in range(_MAX_HALVINGS):
            pend = np.flatnonzero(~accepted)
            if pend.size == 0:
                break
            trial = np.clip(ui[pend] - ti[pend, None, None] * gi[pend], lo, hi)
            c_trial, d_trial = _cost_batch(x0i[pend], trial, cfg)
            dec = np.einsum("bnc,bnc->b", gi[pend], ui[pend] - trial)
            ok = ~d_trial & (dec > 0) & (c_trial <= ci[pend] - ARMIJO_C * dec)
            hit = pend[ok]
            new_u[hit], new_c[hit] = trial[ok], c_trial[ok]
            accepted[hit] = True
            miss = pend[~ok]
            ti[miss] *= 0.5
            if miss.size and ti[miss].max() < _MIN_STEP:
                break

        assert np.all(new_c[accepted] <= ci[accepted]), "line search must not increase cost"
        upd = idx[accepted]
        u_prev[upd], g_prev[upd] = u[upd], grad[upd]
        have_prev[upd] = True
        u[upd], cost[upd] = new_u[accepted], new_c[accepted]
        step[idx[accepted]] = ti[accepted] * 2.0
        done[idx[~accepted]] = True  # stalled: keep best iterate
        if upd.size:
            c2, g2, _ = grad_fn(x0[upd], u[upd], cfg)
            cost[upd], grad[upd] = c2, g2

    return SolveResult(first_control=u[:, 0].copy(), controls=u, cost=cost,
                       diverged=dead, iterations=iters)


def solve(s0, cfg: MpcConfig, warm_start=None):
    """Single-state convenience wrapper: (first_control, sequence, final_cost)."""
    x0 = plant._as_state(s0)[None, :]
    warm = None if warm_start is None else np.asarray(warm_start)[None, ...]
    res = solve_batch(x0, cfg, warm)
    if res.diverged[0]:
        raise DivergenceError("every rollout from this state diverges")
    return res.first_control[0], res.controls[0], float(res.cost[0])


def shift_warm_start(u: np.ndarray) -> np.ndarray:
    """Receding-horizon warm start: drop the applied control, repeat the last."""
    shifted = np.roll(u, -1, axis=-2)
    shifted[..., -1, :] = u[..., -1, :]
    return shifted


@dataclass
class RolloutBatch:
    """Closed-loop expert rollouts, one entry per simulation."""

    dt: float
    states: np.ndarray      # (B, steps+1, 4); valid up to n_samples[b] (+1 if clean)
    controls: np.ndarray    # (B, steps, 2); valid up to n_samples[b]
    n_samples: np.ndarray   # (B,) labeled (state, control) pairs collected
    diverged: np.ndarray    # (B,)

    def trajectory(self, b: int) -> plant.Trajectory:
        # a diverged sim has no valid successor for its last labeled state
        t = int(self.n_samples[b]) - (1 if self.diverged[b] else 0)
        return plant.Trajectory(self.dt, self.states[b, :t + 1], self.controls[b, :t])

    def samples(self, b: int):
        t = int(self.n_samples[b])
        return self.states[b, :t], self.controls[b, :t]

    def all_samples(self):
        xs = np.concatenate([self.samples(b)[0] for b in range(self.states.shape[0])])
        us = np.concatenate([self.samples(b)[1] for b in range(self.states.shape[0])])
        return xs, us


def expert_rollout_batch(x0: np.ndarray, steps: int, cfg: MpcConfig) -> RolloutBatch:
    """Run B warm-started closed-loop expert simulations in lockstep."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1, STATE_DIM)
    b = x0.shape[0]
    states = np.zeros((b, steps + 1, STATE_DIM))
    controls = np.zeros((b, steps, CONTROL_DIM))
    n_samples = np.zeros(b, dtype=int)
    alive = ~plant.diverged(x0)
    dead_at_start = ~alive
    x = x0.copy()
    warm = np.zeros((b, cfg.horizon, CONTROL_DIM))

    for t in range(steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        res = solve_batch(x[idx], cfg, warm[idx])
        u = res.first_control
        states[idx, t] = x[idx]
        controls[idx, t] = u
        n_samples[idx] += 1
        # solver divergence means no usable label trajectory continues from here
        solver_dead = res.diverged
        warm[idx] = shift_warm_start(res.controls)
        with np.errstate(over="ignore", invalid="ignore"):
            xn = plant.rk4_step(x[idx], u, cfg.dt)
        step_dead = plant.diverged(xn)
        ok = ~(solver_dead | step_dead)
        x[idx[ok]] = xn[ok]
        states[idx[ok], t + 1] = xn[ok]
        alive[idx[~ok]] = False

    return RolloutBatch(dt=cfg.dt, states=states, controls=controls,
                        n_samples=n_samples,
                        diverged=~alive | dead_at_start)


def expert_rollout(s0, steps: int, cfg: MpcConfig):
    """One expert simulation: (Trajectory, sample_states, sample_controls, diverged)."""
    batch = expert_rollout_batch(plant._as_state(s0)[None, :], steps, cfg)
    xs, us = batch.samples(0)
    return batch.trajectory(0), xs, us, bool(batch.diverged[0])

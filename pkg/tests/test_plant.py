import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnmpc import plant
from nnmpc.errors import DivergenceError


def box_states():
    return st.tuples(st.floats(-2, 2), st.floats(-2, 2),
                     st.floats(-1, 1), st.floats(-1, 1)).map(np.array)


class TestDynamics:
    def test_rest_state_zero_input(self):
        assert np.array_equal(plant.dynamics([0, 0, 0, 0], [0, 0]), np.zeros(4))

    def test_coasting_with_steering_offset(self):
        # ydot = 1*sin(0) = 0, thetadot = 1*0.5
        out = plant.dynamics([0, 1, 0, 0.5], [0, 0])
        np.testing.assert_allclose(out, [0, 0, 0.5, 0], atol=0)

    def test_hand_computed_rhs(self):
        # ydot = 2*sin(pi/6) = 1, vdot = 3, thetadot = 2*0 = 0, gammadot = -1
        out = plant.dynamics([0, 2, np.pi / 6, 0], [3, -1])
        np.testing.assert_allclose(out, [1.0, 3.0, 0.0, -1.0], rtol=1e-15)

    def test_batched_matches_scalar(self, rng):
        xs = rng.uniform(-2, 2, size=(7, 4))
        us = rng.uniform(-10, 10, size=(7, 2))
        batched = plant.dynamics(xs, us)
        for i in range(7):
            np.testing.assert_array_equal(batched[i], plant.dynamics(xs[i], us[i]))

    @settings(max_examples=200)
    @given(s1=box_states(), s2=box_states(),
           u=st.tuples(st.floats(-10, 10), st.floats(-10, 10)).map(np.array))
    def test_lipschitz_on_bounds_box(self, s1, s2, u):
        # interval bound of the Jacobian over the box, Frobenius norm:
        # |sin(theta)| <= sin(1), |v cos(theta)| <= 2, |gamma| <= 1, |v| <= 2
        lip = np.sqrt(np.sin(1.0) ** 2 + 2.0 ** 2 + 1.0 ** 2 + 2.0 ** 2)
        df = plant.dynamics(s1, u) - plant.dynamics(s2, u)
        assert np.linalg.norm(df) <= lip * np.linalg.norm(s1 - s2) + 1e-12


class TestStep:
    def test_equilibrium(self):
        np.testing.assert_array_equal(plant.step([0, 0, 0, 0], [0, 0], 0.02),
                                      np.zeros(4))

    def test_linear_acceleration_exact(self):
        # theta = 0 makes v' = u1 linear; RK4 is exact: v = 1 + 2*0.1
        out = plant.step([0, 1, 0, 0], [2, 0], 0.1)
        assert out[1] == 1.2
        assert out[0] == 0.0

    def test_linear_steering_exact(self):
        out = plant.step([0, 1, 0, 0], [0, 1], 0.01)
        assert out[3] == 0.01

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            plant.step([0, 0, 0, 0], [0, 0], 0.0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_output_raises(self):
        with pytest.raises(DivergenceError):
            plant.step([0, np.finfo(float).max, 1.0, 1.0], [10, 10], 1.0)

    def test_exact_linear_solution_over_250_steps(self):
        # acceptance-style check at unit scale: theta = gamma = 0, u2 = 0
        x = np.array([0.0, 0.3, 0.0, 0.0])
        u = np.array([1.7, 0.0])
        dt = 0.02
        for k in range(250):
            x = plant.step(x, u, dt)
        assert abs(x[1] - (0.3 + 1.7 * 250 * dt)) < 1e-12
        assert x[0] == 0.0 and x[2] == 0.0 and x[3] == 0.0

    def test_convergence_order_at_least_3_5(self):
        # halve the step over a fixed interval: error should drop ~16x
        x0 = np.array([0.1, 1.5, 0.4, 0.7])
        u = np.array([2.0, -3.0])
        horizon = 0.8

        def integrate(n):
            x = x0
            for _ in range(n):
                x = plant.rk4_step(x, u, horizon / n)
            return x

        ref = integrate(1024)
        e1 = np.linalg.norm(integrate(8) - ref)
        e2 = np.linalg.norm(integrate(16) - ref)
        order = np.log2(e1 / e2)
        assert order >= 3.5


class TestClamp:
    @pytest.mark.parametrize("u,expected", [
        ((15, -3), (10, -3)),
        ((0, 0), (0, 0)),
        ((-11, 12), (-10, 10)),
    ])
    def test_examples(self, u, expected):
        np.testing.assert_array_equal(plant.clamp_control(u), expected)

    @given(u1=st.floats(-100, 100), u2=st.floats(-100, 100))
    def test_always_within_box(self, u1, u2):
        out = plant.clamp_control([u1, u2])
        assert np.all(out >= -10) and np.all(out <= 10)


class TestSampling:
    def test_inside_regime_within_box(self):
        xs = plant.sample_initial_states(500, plant.INSIDE, 7)
        assert np.all(plant.DEFAULT_BOUNDS.state_inside(xs))

    def test_outside_regime_has_component_outside(self):
        xs = plant.sample_initial_states(500, plant.OUTSIDE, 7)
        assert not np.any(plant.DEFAULT_BOUNDS.state_inside(xs))
        # and stays within the inflated box
        assert np.all(np.abs(xs[:, :2]) <= 3.0) and np.all(np.abs(xs[:, 2:]) <= 1.5)

    def test_deterministic_per_seed(self):
        a = plant.sample_initial_states(50, plant.OUTSIDE, 99)
        b = plant.sample_initial_states(50, plant.OUTSIDE, 99)
        np.testing.assert_array_equal(a, b)

    def test_single_state_helper(self):
        s = plant.sample_initial_state(plant.INSIDE, 3)
        assert s.shape == (4,)

    def test_unknown_regime_rejected(self):
        with pytest.raises(ValueError):
            plant.sample_initial_states(1, "sideways", 0)


class TestTypes:
    def test_state_round_trip(self):
        s = plant.State(0.1, -0.2, 0.3, -0.4)
        assert plant.State.from_array(s.as_array()) == s

    def test_bounds_validate(self):
        with pytest.raises(ValueError):
            plant.Bounds(state_low=np.ones(4), state_high=np.zeros(4))

    def test_trajectory_length_invariant(self):
        with pytest.raises(ValueError):
            plant.Trajectory(0.1, np.zeros((3, 4)), np.zeros((3, 2)))
        t = plant.Trajectory(0.1, np.zeros((4, 4)), np.zeros((3, 2)))
        assert len(t) == 3

    def test_trajectory_positive_dt(self):
        with pytest.raises(ValueError):
            plant.Trajectory(0.0, np.zeros((2, 4)), np.zeros((1, 2)))

    def test_divergence_guard_predicate(self):
        assert plant.diverged([0, 2e6, 0, 0])
        assert not plant.diverged([0, 1e5, 0, 0])
        assert plant.diverged([np.nan, 0, 0, 0])

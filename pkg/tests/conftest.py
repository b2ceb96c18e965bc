import numpy as np
import pytest

from nnmpc import mpc


@pytest.fixture
def fast_mpc_cfg():
    """Short-horizon expert config to keep integration-style tests quick."""
    return mpc.MpcConfig(horizon=8, dt=0.05, max_iters=80)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

"""Neural-network approximation of a model predictive controller.

A kinematic bicycle plant, a receding-horizon quadratic-cost expert, a
from-scratch 4-512-512-2 MLP, and two imitation-learning drivers
(behavioral cloning and DAgger) with a pooled control-RMSE evaluation.
"""

from . import cli, config, data, evaluation, imitation, mlp, mpc, plant, seeding
from .errors import (ConfigError, DatasetFormatError, DivergenceError,
                     NnmpcError, NumericalFailure)

__all__ = [
    "cli", "config", "data", "evaluation", "imitation", "mlp", "mpc",
    "plant", "seeding",
    "ConfigError", "DatasetFormatError", "DivergenceError", "NnmpcError",
    "NumericalFailure",
]

__version__ = "0.1.0"

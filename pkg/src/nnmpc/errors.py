"""Exception types shared across the package."""


class NnmpcError(Exception):
    """Base class for all package errors."""


class DivergenceError(NnmpcError):
    """A rollout left the numeric safe box (a trajectory exploded)."""


class NumericalFailure(NnmpcError):
    """A loss or intermediate quantity became non-finite during training."""


class ConfigError(NnmpcError):
    """A config document is malformed (unknown keys, bad values)."""


class DatasetFormatError(NnmpcError):
    """A dataset CSV is malformed; message names the offending row."""


class WeightsFormatError(NnmpcError):
    """A weights file is truncated or not in the expected binary format."""


class WeightsVersionError(NnmpcError):
    """A weights file carries an unsupported format version."""


class WeightsShapeError(NnmpcError):
    """A weights file encodes layer shapes other than 4-512-512-2."""

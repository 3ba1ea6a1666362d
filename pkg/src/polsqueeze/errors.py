"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical or numerical parameter violates its precondition."""


class GridError(ParameterError):
    """Invalid time-grid construction (size, window)."""


class TruncationError(ValueError):
    """Grid window too small to hold the requested pulse or kernel."""


class CalibrationError(RuntimeError):
    """A calibration self-check failed (e.g. anisotropic shot-noise reference)."""


class TrajectoryAbort(RuntimeError):
    """A single Monte Carlo trajectory became invalid (NaN/Inf or aliasing)."""


class EnsembleError(RuntimeError):
    """Too many trajectories of an ensemble aborted."""


class ConfigError(ValueError):
    """Run configuration failed schema or consistency validation."""

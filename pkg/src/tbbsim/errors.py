"""Exception types shared across the simulator."""


class TbbError(Exception):
    """Base class for all simulator errors."""


class LambdaZeroError(TbbError):
    """Raised when an operation requires a strictly positive repump rate."""


class EmptyDriveError(TbbError):
    """Raised when transmittance is requested with eta = 0."""


class ReconstructionError(TbbError):
    """Raised when a saturation root fails to reconstruct into a fixed point."""


class StiffnessError(TbbError):
    """Raised when the time integrator cannot make progress."""

    def __init__(self, message, last_time=None, last_state=None):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state


class InsufficientPopulationError(TbbError):
    """Raised when the repump-rate estimator has no shelved population to work with."""


class ConfigError(TbbError):
    """Raised on invalid run configuration; message carries line numbers where known."""

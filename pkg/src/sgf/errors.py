"""Exception hierarchy shared by every sgf module."""


class SgfError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(SgfError, ValueError):
    """Bad shapes, empty inputs, out-of-range settings."""


class OracleProtocolError(SgfError):
    """External-oracle handshake or wire-format violation."""


class UnsupportedOperationError(SgfError):
    """Operation not available for this object (e.g. gradients of an external oracle)."""


class CorruptCheckpointError(SgfError):
    """Checkpoint or dataset file failed magic/version/shape validation."""


class TrainingDivergedError(SgfError):
    """Loss became non-finite; carries the last iteration that was still finite."""

    def __init__(self, message, last_finite_iteration):
        super().__init__(message)
        self.last_finite_iteration = last_finite_iteration


class SingularFieldError(SgfError):
    """(I - dF/dz) is numerically singular; the exact inverse field is undefined."""


class DivergedNavigationError(SgfError):
    """Navigation produced non-finite or exploding latents; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class UndefinedDeviationError(SgfError):
    """Path deviation is undefined because the trace chord has zero length."""

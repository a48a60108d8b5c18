"""Exception hierarchy for capax."""


class CapaxError(Exception):
    """Base class for all errors raised by capax."""


class DimensionError(CapaxError, ValueError):
    """Points or arrays do not have the expected dimension."""


class KernelDomainError(CapaxError, ValueError):
    """Kernel parameters or evaluation points are outside the admissible range."""


class InvalidShapeError(CapaxError, ValueError):
    """A shape specification is degenerate or unsupported."""


class StageCountError(CapaxError, ValueError):
    """An exhaustion asks for more stages than the target can provide."""


class NodeSetMismatchError(CapaxError, ValueError):
    """A measure and a Gram form live on different node sets."""


class NotPositiveDefiniteError(CapaxError, ValueError):
    """A quadratic form that must be positive definite is not."""


class IllConditionedDiscretizationError(NotPositiveDefiniteError):
    """An assembled Gram matrix failed the positive-definiteness check."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class SizeError(CapaxError, ValueError):
    """An exact enumeration was requested on an instance that is too large."""


class CertificationError(CapaxError, RuntimeError):
    """A generated kernel repeatedly failed the maximum-principle checks."""

"""Exception hierarchy shared by every nullag module."""


class NullagError(Exception):
    """Base class for all errors raised by nullag."""


class InvalidArgument(NullagError, ValueError):
    pass


class UnsupportedDimension(InvalidArgument):
    pass


class GrowthViolation(NullagError):
    """Polynomial degree exceeds the requested growth exponent."""


class NotQuasiaffine(NullagError):
    """Raised when a polynomial is not an affine combination of minors.

    ``residual`` holds the polynomial part that the minor basis cannot represent.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotBoundaryNL(NullagError):
    """Raised when a null Lagrangian has a nonzero coefficient on a minor that
    involves the normal direction. ``offending`` maps (s, rows, cols) to the
    coefficient."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending or {}


class OptimizationFailure(NullagError):
    pass

"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for every error raised by lpcontract."""


class InvalidInputError(LabError, ValueError):
    pass


class GridMismatchError(InvalidInputError):
    pass


class NumericalFailure(LabError, RuntimeError):
    """A root finder or linear solve did not converge.

    ``diagnostics`` carries whatever state is useful for a post-mortem
    (iteration counts, last residuals, brackets).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NonEllipticError(LabError):
    """Coefficient field whose Hermitian part is not positive definite.

    The computed constants are still attached for diagnostics.
    """

    def __init__(self, message, constants):
        super().__init__(message)
        self.constants = constants

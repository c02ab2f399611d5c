"""
Exception types raised by normalflow

Non-convergence is never raised; it is reported on the result objects.
"""


class NormalFlowError(Exception):
    """Base class for every error raised by the package"""


class DimensionMismatchError(NormalFlowError, ValueError):
    pass


class InvalidMatrixError(NormalFlowError, ValueError):
    pass


class ToleranceError(NormalFlowError, ValueError):
    pass


class EigenSolverError(NormalFlowError, ArithmeticError):
    pass


class NotOnSphereError(NormalFlowError, ValueError):
    """Raised when a unit-Frobenius-norm precondition is violated"""


class NonFiniteFlowError(NormalFlowError, ArithmeticError):
    """Raised when an iterate picks up NaN/Inf (step size pathology)"""


class GraphFormatError(NormalFlowError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ExperimentError(NormalFlowError, ValueError):
    pass

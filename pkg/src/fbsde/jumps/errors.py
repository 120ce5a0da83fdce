"""
Exceptions raised by the solver library
"""


class FBSDEError(Exception):
    """Base class for every error raised by fbsde.jumps"""


class ConfigurationError(FBSDEError, ValueError):
    """Invalid rule size, interval, mesh, partition, measure or setting"""


class ProblemNotFoundError(FBSDEError, LookupError):
    """Unknown problem registry name"""


class UnsupportedError(FBSDEError):
    """The operation needs data the problem does not carry"""


class UsageError(FBSDEError, ValueError):
    """Harness called with inconsistent arguments"""


class EvaluationError(FBSDEError, ArithmeticError):
    """A function produced a non-finite value"""

    def __init__(self, message: str, location: str | None = None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class InterpolationError(EvaluationError):
    """Non-finite interpolant value"""


class PicardConvergenceError(FBSDEError):
    """Fixed-point iteration for Y did not contract within the iteration limit"""

    def __init__(self, iterations: int, residual: float, index: int | None = None):
        where = "" if index is None else f" at element {index}"
        super().__init__(
            f"Picard iteration did not converge in {iterations} iterations{where}, "
            f"last residual {residual:.3e}"
        )
        self.iterations = iterations
        self.residual = residual
        self.index = index


class StepError(FBSDEError):
    """A backward step failed at a grid point"""

    def __init__(self, level: int, index: int, residual: float | None, reason: str):
        super().__init__(f"Backward step n={level} failed at grid index {index}: {reason}")
        self.level = level
        self.index = index
        self.residual = residual

"""Exception hierarchy shared by the solvers, oracles and harness."""


class IpminsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(IpminsError, ValueError):
    pass


class InvalidProblem(IpminsError, ValueError):
    pass


class NonInteriorIterate(IpminsError, ValueError):
    pass


class NonInteriorStart(NonInteriorIterate):
    pass


class InfeasibleStart(IpminsError, ValueError):
    pass


class MissingHessian(IpminsError, ValueError):
    pass


class ZeroGap(IpminsError, ValueError):
    pass


class SingularSystem(IpminsError, ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularPreconditioner(SingularSystem):
    pass


class MaxInnerIterations(IpminsError, RuntimeError):
    """Krylov solve hit ``max_inner`` before meeting its tolerance.

    The best direction found is attached as ``direction`` so callers can
    keep going with a flagged step.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class StalledStep(IpminsError, RuntimeError):
    pass


class PreconditionUnmet(IpminsError, ValueError):
    pass


class IncompleteTrace(IpminsError, ValueError):
    pass


class UnsupportedFamily(IpminsError, ValueError):
    pass


class ConfigError(IpminsError, ValueError):
    pass

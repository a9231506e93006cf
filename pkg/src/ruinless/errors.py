"""Exception hierarchy.

Errors split into two families so the CLI can map them to exit codes:
``ModelError`` for bad inputs and ``SolverError`` for numerical failures.
"""


class RuinlessError(Exception):
    """Base class for all package errors."""


class ModelError(RuinlessError, ValueError):
    """Invalid model inputs."""


class DegenerateLiability(ModelError):
    """Raised when delta <= 0; the problem is trivial and V is identically zero."""


class InvalidParameter(ModelError):
    def __init__(self, name, message):
        self.name = name
        super().__init__(f"{name}: {message}")


class OutOfRegion(ModelError):
    """Retention outside the control region."""


class MomentMismatch(ModelError):
    """Model drift/volatility disagree with the claim distribution's moments."""


class DegenerateDiffusion(ModelError):
    """Variance rate is not positive."""


class SolverError(RuinlessError, ArithmeticError):
    """Numerical failure inside a solver step."""


class NoBracket(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class DepthExceeded(SolverError):
    pass


class InternalInconsistency(SolverError):
    pass


class NonPositiveInjection(SolverError):
    pass


class CrossCheckFailure(SolverError):
    pass


class QviViolation(RuinlessError):
    """A candidate value function fails the QVI checks.

    ``report`` holds the full residual report and ``worst`` the offending
    record.
    """

    def __init__(self, message, report=None, worst=None):
        super().__init__(message)
        self.report = report
        self.worst = worst

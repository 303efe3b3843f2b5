"""Exception hierarchy shared across the package.

Most errors derive from builtins (``ValueError`` / ``RuntimeError``) so
callers can catch them generically, while still being distinguishable for
the CLI's exit-code mapping.
"""


class DdlqiError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(DdlqiError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(DdlqiError, ValueError):
    """A configuration file or option set is malformed."""


class DomainError(DdlqiError, ValueError):
    """An argument lies outside the mathematical domain of the operation
    (e.g. a gain that does not stabilize the plant, or a parameterizer
    outside the admissible set)."""


class SingularMatrixError(DdlqiError, ValueError):
    """A matrix that must be invertible is singular to working precision."""


class RankError(DdlqiError, RuntimeError):
    """A required rank condition fails.

    Carries the observed numerical rank and the threshold used.
    """

    def __init__(self, message, rank=None, required=None, threshold=None):
        super().__init__(message)
        self.rank = rank
        self.required = required
        self.threshold = threshold


class AssumptionError(DdlqiError, RuntimeError):
    """A structural assumption required by the synthesis fails for the
    given plant or weights (stabilizability of the integral-augmented
    pair, or detectability of the cost), as opposed to a data-quality
    problem (:class:`RankError`) or a bad argument."""


class NumericalError(DdlqiError, RuntimeError):
    """An iterative numerical procedure broke down (overflow, failure of an
    eigenvalue iteration, step-size underflow, ...)."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration budget before reaching the
    requested tolerance.  ``best`` holds the last (still valid) iterate
    when one is available."""

    def __init__(self, message, best=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class InfeasibleError(DdlqiError, RuntimeError):
    """No strictly feasible point could be constructed (phase-1 failure),
    as opposed to a numerical stall of an otherwise feasible iteration."""


class ConsistencyError(DdlqiError, RuntimeError):
    """An internal cross-check that should hold by construction failed,
    indicating corrupted or inconsistent data."""

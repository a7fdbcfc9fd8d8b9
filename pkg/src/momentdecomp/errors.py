"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class MomentDecompError(Exception):
    """Base class for all errors raised by momentdecomp."""


# -- joints -------------------------------------------------------------------


class InvalidJoint(MomentDecompError, ValueError):
    """A joint table violates a structural invariant (mass, duplicates, ...)."""


class UnknownVariable(MomentDecompError, LookupError):
    """A variable name or conditioning depth is not present in a joint."""


class ZeroProbabilityEvent(MomentDecompError, ValueError):
    """Conditioning on an event with zero marginal probability."""


class ArityError(MomentDecompError, ValueError):
    """Operation called on a joint with the wrong number of target variables."""


# -- model files and expressions ----------------------------------------------


class ModelSyntaxError(MomentDecompError, ValueError):
    """Malformed model text or parameter expression.

    ``line`` and ``column`` are 1-based. For expression errors the position is
    within the expression string and ``where`` names the JSON location the
    expression came from.
    """

    def __init__(self, message: str, line: int = 1, column: int = 1, where: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.where = where
        loc = f"line {line}, column {column}"
        if where:
            loc = f"{where}: {loc}"
        super().__init__(f"{loc}: {message}")


class UnknownVariableReference(MomentDecompError, ValueError):
    """An expression references a variable that is not (yet) defined."""


class InvalidDistributionSpec(MomentDecompError, ValueError):
    """A distribution or leaf specification is structurally invalid."""


class EvaluationError(MomentDecompError, ArithmeticError):
    """Base class for failures while evaluating a parameter expression."""


class DivisionByZero(EvaluationError):
    pass


class NonFiniteResult(EvaluationError):
    pass


class InvalidProbability(MomentDecompError, ValueError):
    """A reachable conditional distribution is not a valid distribution."""


class SupportExplosion(MomentDecompError, RuntimeError):
    """Compilation would exceed the configured atom cap."""


# -- engines --------------------------------------------------------------------


class IdentityViolation(MomentDecompError, ArithmeticError):
    """Two evaluation routes that must agree numerically did not."""


class OracleUndefined(MomentDecompError, LookupError):
    """A Monte Carlo term needs a conditional moment the oracle does not supply."""

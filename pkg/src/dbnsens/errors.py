"""Exception hierarchy.

Two families matter to callers: :class:`InputError` for malformed models,
evidence, labels or arguments, and :class:`ComputationError` for failures
that arise while computing on well-formed inputs. The CLI maps them to
exit codes 1 and 2.
"""

from __future__ import annotations


class DbnSensError(Exception):
    """Base class; ``module`` names the component that raised."""

    module = "dbnsens"


class InputError(DbnSensError, ValueError):
    pass


class ComputationError(DbnSensError, ArithmeticError):
    pass


class ModelValidationError(InputError):
    module = "model-core"

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class LabelResolutionError(InputError):
    module = "cli"


class ParameterDomainError(InputError):
    """Parameter value outside [0, 1] or index out of range."""

    module = "model-core"


class CovariationError(ComputationError):
    """Proportional co-variation undefined because the nominal entry is 1."""

    module = "model-core"


class StateSpaceTooLargeError(ComputationError):
    module = "model-core"

    def __init__(self, count, cap, what="joint state count"):
        super().__init__(f"{what} {count} exceeds cap {cap}")
        self.count = count
        self.cap = cap


class ImpossibleEvidenceError(ComputationError):
    module = "model-core"

    def __init__(self, step):
        super().__init__(f"evidence has zero likelihood at time step {step}")
        self.step = step


class DegenerateNodesError(ComputationError):
    module = "polynomials"


class DegeneratePolynomialError(ComputationError):
    module = "polynomials"


class FitFailureError(ComputationError):
    module = "sensitivity"


class EvidenceDegeneracyError(ComputationError):
    module = "sensitivity"


class DegenerateRegionError(ComputationError):
    module = "decision"


class DegenerateWindowError(ComputationError):
    module = "contraction"

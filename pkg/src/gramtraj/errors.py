"""Exception hierarchy shared by all analysis stages.

The CLI maps these onto exit codes: validation problems exit 1, I/O
problems exit 2, broken internal invariants exit 3.
"""


class GramTrajError(Exception):
    """Base class; ``module`` names the stage that raised."""

    module = "gramtraj"

    def __init__(self, message, *, module=None, subject=None):
        super().__init__(message)
        if module is not None:
            self.module = module
        self.subject = subject


class ValidationError(GramTrajError, ValueError):
    pass


class DomainError(ValidationError):
    """Input outside the mathematical domain of an operation."""


class InsufficientDataError(ValidationError):
    pass


class ContractViolation(ValidationError):
    """Caller broke a documented precondition (e.g. mixed checkpoint steps)."""


class InvariantViolation(GramTrajError, AssertionError):
    """Internal consistency check failed; indicates a bug, not bad input."""

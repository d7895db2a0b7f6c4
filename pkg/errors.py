# errors.py - Exception hierarchy for thermolimit
"""
Every failure raised by the library derives from ThermolimitError so callers
(and the CLI) can separate computation failures from programming errors.
"""

from typing import Optional

import pydantic


class ThermolimitError(Exception):
    """Base class for all library errors"""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class DomainError(ThermolimitError, ValueError):
    """Argument outside the domain of a function"""


class SingularityError(DomainError):
    """Function diverges at the requested point"""


class ConvergenceError(ThermolimitError):
    """Iterative numerical method did not converge"""


class BracketError(ConvergenceError):
    """Root bracket has no sign change"""


class ValidationError(ThermolimitError, ValueError):
    """Invalid operator, POVM, spectrum or configuration"""


class CutoffError(ThermolimitError):
    """Mode-grid cutoff too small for the requested temperature"""


class InsufficientDataError(ThermolimitError, ValueError):
    """Too few points for a fit or check"""


class IllConditionedFitError(ThermolimitError):
    """Least-squares design matrix is numerically singular"""


class EstimationError(ThermolimitError):
    """Estimator cannot produce a meaningful answer"""


class UsageError(ThermolimitError):
    """Bad command-line usage"""


# ============================================================================
# EXIT CODES
# ============================================================================

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def exit_code_for(exc: BaseException) -> Optional[int]:
    """Map an exception to a CLI exit code, None if it is not ours"""
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, pydantic.ValidationError):
        return EXIT_USAGE
    if isinstance(exc, ThermolimitError):
        return EXIT_FAILURE
    return None

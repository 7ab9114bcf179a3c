"""
Moreau-W2 - Errors
Description: Exception hierarchy shared by the solvers and the command line
"""

from typing import Any, Dict


class MoreauW2Error(Exception):
    """Base class for every error raised by the package"""

    exit_code: int = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form printed by the CLI on standard error"""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
            "exit_code": self.exit_code,
        }


class ValidationError(MoreauW2Error):
    """Input rejected before any computation took place"""

    exit_code = 1


class EmptyInput(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class SizeMismatch(ValidationError):
    pass


class InvalidWeights(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class NonSPD(ValidationError):
    pass


class NonMonotoneMap(ValidationError):
    pass


class BadDelta(ValidationError):
    pass


class GridOutOfBand(ValidationError):
    pass


class Degenerate(ValidationError):
    """Optimal matching is not unique, so the Wasserstein gradient is undefined"""


class SolverError(MoreauW2Error):
    """A solver ran but could not certify its answer"""

    exit_code = 2


class SolverStall(SolverError):
    pass


class NoConvergence(SolverError):
    """Iteration cap reached; ``partial`` holds the best result found so far"""

    def __init__(self, message: str, partial: Any = None, **details: Any):
        super().__init__(message, **details)
        self.partial = partial


class ArtifactIOError(MoreauW2Error):
    """Reading or writing an input/output artifact failed"""

    exit_code = 3


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)

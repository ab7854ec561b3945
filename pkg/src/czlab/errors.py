"""Exception types shared across the package."""


class CzlabError(Exception):
    """Base class for all package errors."""


class ValidationError(CzlabError):
    """A parameter or invariant check failed; the message names the constraint."""


class DomainError(CzlabError):
    """A point, ball or field lies outside the region where it is defined."""


class ResolutionError(CzlabError):
    """A requested scale is below the grid resolution."""


class NonConvergenceError(CzlabError):
    """Iterative solve hit max_iterations. Carries the partial SolveReport."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CalibrationError(CzlabError):
    """A calibration constant is too small for the requested check."""


class GeometryExhaustedError(CzlabError):
    """Exit-ball search ran past its admissible radius range."""


class ScheduleError(CzlabError):
    """Iteration-schedule gate violated; raise C_0 (or c_0) and retry."""


class ContractError(CzlabError):
    """Caller broke a documented precondition (e.g. mismatched boundary data)."""


class FitError(CzlabError):
    """Not enough usable points for a tail fit."""

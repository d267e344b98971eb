"""Exception hierarchy shared across the package."""


class SleeveError(Exception):
    """Base class for all package errors."""


class DomainError(SleeveError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ContractViolation(SleeveError, ValueError):
    """A user-supplied callable broke its documented contract."""


class ConfigurationError(SleeveError, ValueError):
    """Missing or inconsistent configuration (MVC tables, lever geometry, ...)."""


class InsufficientDataError(SleeveError, ValueError):
    pass


class DegenerateDesignError(SleeveError, ValueError):
    """Regression design matrix is rank deficient (e.g. all x identical)."""


class UndefinedRSquaredError(SleeveError, ValueError):
    pass


class FitFailure(SleeveError, RuntimeError):
    """No start of a nonlinear fit converged.

    The best attempt is kept on ``best`` so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CapabilityExceeded(SleeveError, ValueError):
    """Requested torque is beyond what an antagonistic pair can produce."""

    def __init__(self, message, axis, requested_nm, achievable_nm):
        super().__init__(message)
        self.axis = axis
        self.requested_nm = requested_nm
        self.achievable_nm = achievable_nm


class UndefinedFractionError(SleeveError, ValueError):
    pass


class RiseTimeNotFound(SleeveError, LookupError):
    pass


class SegmentationError(SleeveError, ValueError):
    pass


class IncompleteDataError(SleeveError, ValueError):
    pass


class ParseError(SleeveError, ValueError):
    """Malformed file content. ``line`` is 1-based, counting the header."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class ValidationError(ParseError):
    """Well-formed row whose values violate a range invariant."""


class RateMismatchError(ParseError):
    pass


class MissingChannelError(ParseError):
    pass

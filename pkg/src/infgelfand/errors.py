"""Exception types shared across the solver suite."""


class GelfandError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInteriorError(GelfandError):
    """Domain construction produced no interior grid nodes."""


class NonPositiveRHSError(GelfandError):
    """Frozen right-hand side must be strictly positive on interior nodes."""


class InvalidLambdaError(GelfandError):
    """Load parameter outside the range an operation accepts."""


class BracketInvalidError(GelfandError):
    """Threshold bracket could not be validated even after expansion."""


class MaxIterError(GelfandError):
    """Iteration budget exhausted before reaching the requested tolerance."""


class OverflowGuardError(GelfandError):
    """Log-space magnitude guard tripped; inputs outside the tractable regime."""


class NoRootError(GelfandError):
    """Bracketing search found no sign change (load beyond the fold)."""


class UsageError(GelfandError):
    """Bad CLI arguments or configuration file contents."""

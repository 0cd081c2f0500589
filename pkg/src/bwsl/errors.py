"""Exception hierarchy shared across the package."""


class BwslError(Exception):
    """Base class for all package errors."""


class UsageError(BwslError):
    """Bad command-line arguments or configuration keys."""


class DataError(BwslError):
    """Malformed, missing, or inconsistent input data."""


class NoEligibleStocksError(DataError):
    """No stock has a complete look-back window at the requested time."""


class MissingReturnError(DataError):
    """A supported stock has no realized price for the holding period."""


class NumericError(BwslError):
    """Numerical failure: non-finite values, domain violations, degeneracy."""


class ShapeError(NumericError):
    """Operand shapes do not conform to an operation's signature."""


class NonFiniteError(NumericError):
    """An operation produced NaN or infinity."""


class DomainError(NumericError):
    """An operation was evaluated outside its mathematical domain."""


class ZeroVolatilityError(NumericError):
    """A return series has zero variance, so no risk-adjusted ratio exists."""


class RuinError(NumericError):
    """Cumulative wealth hit zero or went negative."""


class TrainingDivergedError(NumericError):
    """The training loop detected a degenerate, non-learning policy."""

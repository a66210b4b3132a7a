"""Exception hierarchy shared across the package."""


class RoughfolioError(Exception):
    """Base class for all package errors."""


class ParameterError(RoughfolioError, ValueError):
    """A scalar/structural parameter violates its admissible range."""


class GridAlignmentError(RoughfolioError, ValueError):
    """A time point or partition does not lie on the reference grid."""


class DomainError(RoughfolioError, ValueError):
    """A value left its mathematical domain (e.g. non-positive price)."""


class BoundaryError(DomainError):
    """A market weight collapsed onto the simplex boundary."""


class ReferenceMismatchError(RoughfolioError, ValueError):
    """Two controlled paths do not share the same reference lift."""


class MeasureError(RoughfolioError, ValueError):
    """A discrete measure has invalid weights or empty support."""


class PortfolioError(RoughfolioError, ValueError):
    """A portfolio path violates the sum-to-one constraint."""


class InstabilityError(RoughfolioError, RuntimeError):
    """A numerical scheme produced NaN/inf or exploded."""


class ConditioningError(RoughfolioError, RuntimeError):
    """A linear solve is rank-deficient beyond the expected kernel."""

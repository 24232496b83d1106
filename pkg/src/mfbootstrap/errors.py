"""Exception hierarchy shared across the package."""


class MfbError(Exception):
    """Base class for all package errors."""

    kind = "error"


class InputError(MfbError):
    """Malformed or missing user input (CSV files, flag values)."""

    kind = "input-invalid"


class InputNotFoundError(InputError):
    kind = "input-not-found"


class DomainError(MfbError, ValueError):
    """Argument outside its mathematical domain (e.g. u not in (0,1))."""

    kind = "domain"


class ConfigError(MfbError, ValueError):
    """Invalid run configuration."""

    kind = "config-invalid"


class DegenerateSampleError(MfbError):
    """Sample carries no usable variation (e.g. all values identical)."""

    kind = "degenerate-sample"


class ExtrapolationError(MfbError):
    """Conditional CDF queried outside the data cloud (all weights underflow)."""

    kind = "extrapolation"


class FactorizationError(MfbError):
    """Banded Cholesky hit a nonpositive pivot."""

    kind = "factorization"


class RepairFailureError(FactorizationError):
    """Ridge repair exceeded its budget; input pathologically degenerate."""

    kind = "repair-failure"


class InsufficientDataError(MfbError):
    kind = "insufficient-data"


class RunError(MfbError):
    """Too many replicates or experiment paths failed."""

    kind = "run-failure"

"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: bad file contents, shape mismatches, out-of-range values."""


class NumericalError(RuntimeError):
    """Numerical failure, e.g. a covariance that cannot be factorized."""

"""Exception types shared across the package."""


class KolepiError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(KolepiError):
    """Invalid or inconsistent configuration (bad values, unknown keys)."""


class DataError(KolepiError):
    """Shape/consistency violation in datasets or training inputs."""


class IntegrationError(KolepiError):
    """ODE integration produced non-finite values."""


class ConditioningError(KolepiError):
    """Regularized Gram matrix is not positive definite."""


class FormatError(KolepiError):
    """Corrupt, truncated, or version-incompatible on-disk artifact."""


class NoEradicationError(KolepiError):
    """No admissible control in the sweep produced an eradication event."""

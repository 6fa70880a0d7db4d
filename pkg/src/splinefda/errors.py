"""Exception types shared across the package."""


class SplineFdaError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SplineFdaError):
    """Invalid argument values: empty data, bad shapes, mismatched grids."""


class DomainError(InputError):
    """A point or index falls outside the declared domain of an object."""


class RankError(InputError):
    """Too few samples to determine the requested representation."""


class DataFormatError(SplineFdaError):
    """Malformed external data: bad magic numbers, ragged CSV rows, etc."""


class ConditioningError(SplineFdaError):
    """A numerical operation is too ill-conditioned to trust."""


class ConfigurationError(SplineFdaError):
    """Invalid pipeline or CLI configuration."""

"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class ClusterBellError(Exception):
    exit_code = 2


class ConfigError(ClusterBellError, ValueError):
    """Invalid input: bad sizes, regions, parameters or config documents."""

    exit_code = 2


class InvalidSizeError(ConfigError):
    pass


class InvalidRegionError(ConfigError):
    pass


class DisjointnessError(ConfigError):
    pass


class GeometryError(ConfigError):
    pass


class ArityError(ConfigError):
    pass


class PartitionError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class DegenerateObservableError(ConfigError):
    pass


class NotHermitianError(ConfigError, TypeError):
    pass


class ShapeError(ConfigError):
    pass


class ResourceError(ClusterBellError):
    """A computation would exceed the configured dimension caps."""

    exit_code = 3


class FeasibilityError(ResourceError):
    pass


class NumericIntegrityError(ClusterBellError, ArithmeticError):
    exit_code = 3


class DataError(ClusterBellError):
    """Not enough (or unusable) data to fit or sweep."""

    exit_code = 4


class InsufficientDataError(DataError):
    pass


class ScheduleError(DataError):
    pass


class NoDecayError(DataError):
    pass

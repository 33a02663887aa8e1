"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Malformed arguments: wrong dimension, negative radius, speed violation."""


class DegeneratePointError(InvalidInputError):
    """A derivative was requested at a point where it does not exist."""


class SolverError(RuntimeError):
    """The convex solver could not produce a usable answer."""


class InternalConsistencyError(RuntimeError):
    """An invariant that the theory guarantees was observed to fail."""


class ConfigError(ValueError):
    """Invalid configuration file or scenario template."""


class UnsupportedDimensionError(InvalidInputError):
    """Operation only available in a particular spatial dimension."""

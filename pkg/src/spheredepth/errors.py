"""Exception hierarchy shared across the package."""


class SphereDepthError(Exception):
    """Base class for all package errors."""


class DimensionError(SphereDepthError, ValueError):
    """Shapes disagree; the message names the offending axis."""


class DomainError(SphereDepthError, ValueError):
    """A mathematical function was evaluated outside its domain."""


class ValidationError(SphereDepthError, ValueError):
    """An input violates a documented precondition (NaN grid, bad rotation, ...)."""


class StateError(SphereDepthError, RuntimeError):
    """An operation was called in an illegal order (backward twice, step without grads)."""


class CheckpointError(SphereDepthError, RuntimeError):
    """A parameter checkpoint is malformed or incompatible."""


class IngestionError(SphereDepthError, ValueError):
    """A dataset file or manifest could not be ingested."""


class EmptyBatchError(SphereDepthError, ValueError):
    """A reduction was requested over an empty pixel set."""


class ConfigError(SphereDepthError, ValueError):
    """A configuration file or flag set is invalid."""

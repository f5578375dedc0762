"""Exception hierarchy shared across the package."""


class CddLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CddLabError):
    """A configuration value is invalid; the message names the field."""


class CapacityError(CddLabError):
    """A resource pool is too small for the requested operation."""


class IngestionError(CddLabError):
    """A corpus on disk is malformed or incomplete."""


class InputError(CddLabError):
    """Runtime input violates a shape or value contract."""


class StateError(CddLabError):
    """Parameter state is incompatible with the requested operation."""


class TrainingError(CddLabError):
    """Training diverged. Carries the last finite state when available."""

    def __init__(self, message, last_params=None, history=None):
        super().__init__(message)
        self.last_params = last_params
        self.history = history


class MetricError(CddLabError):
    """A metric is undefined for the given inputs."""


class ReportError(CddLabError):
    """Report or plot emission failed; the message names the run."""


class LabelAccessError(CddLabError):
    """A training code path tried to read an eval-only label or mask."""

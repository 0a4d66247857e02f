"""Exception hierarchy shared by every ncap-lab module."""


class NcapError(Exception):
    """Base class for all ncap-lab errors."""


class DomainError(NcapError, ValueError):
    """A numeric argument lies outside the operation's domain."""


class ShapeError(NcapError, ValueError):
    """Array dimensions do not agree."""


class ConfigurationError(NcapError, ValueError):
    """Invalid configuration, or inputs missing for a loss variant."""


class UndefinedCorrelationError(DomainError):
    """Pearson correlation requested for a constant input."""


class CheckpointError(NcapError):
    """A checkpoint file is unreadable, truncated or of another version."""


class TrainingDivergedError(NcapError):
    """A training loss became non-finite."""

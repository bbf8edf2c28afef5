"""Exception types raised across the package."""


class EnvAffError(Exception):
    """Base class for all package errors."""


class PlacementFailure(EnvAffError):
    pass


class AugmentFailure(EnvAffError):
    pass


class OutOfRange(EnvAffError, ValueError):
    pass


class InvalidPoint(EnvAffError, ValueError):
    pass


class QuotaFailure(EnvAffError):
    def __init__(self, message, starved=None):
        super().__init__(message)
        self.starved = starved


class CorruptData(EnvAffError):
    pass


class VersionMismatch(EnvAffError):
    pass


class ShapeMismatch(EnvAffError, ValueError):
    pass


class NonFiniteGradient(EnvAffError, FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LengthMismatch(EnvAffError, ValueError):
    pass


class NoPositives(EnvAffError, ValueError):
    pass


class EmptyScene(EnvAffError, ValueError):
    pass


class IoFailure(EnvAffError, OSError):
    pass


class ConfigError(EnvAffError, ValueError):
    """Config validation failure; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

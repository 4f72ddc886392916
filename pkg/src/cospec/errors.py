"""Exception types shared across the package."""


class CospecError(Exception):
    """Base class for package errors."""


class IntegrationError(CospecError):
    """Trajectory integration failed; carries the last valid state.

    Attributes:
        partial: the Trajectory accumulated up to the failure, or None.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class RefinementError(CospecError):
    """A closed-orbit candidate could not be refined."""


class FocalSingularityError(CospecError):
    """Orbit too close to a focal point (|m12| ~ 0) for a finite amplitude."""


class NyquistError(CospecError):
    """Requested frequency window violates the sampling-rate guard."""


class ConfigError(CospecError):
    """Invalid or inconsistent pipeline configuration."""

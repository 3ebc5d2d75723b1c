"""Exception types shared across the package."""


class SplatVoError(Exception):
    """Base class for errors raised by this package."""


class DegenerateRotationError(SplatVoError):
    """Rotation angle too close to pi for a stable logarithm."""


class InsufficientPointsError(SplatVoError):
    """A point-cloud operation received fewer points than it requires."""


class RegistrationError(SplatVoError):
    """ICP registration failed; carries the last pose estimate."""

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DegenerateMaskError(SplatVoError):
    """A mask excluded every pixel, leaving nothing to optimize."""

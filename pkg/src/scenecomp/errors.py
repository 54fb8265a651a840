"""Exception types shared across the package."""


class SceneCompError(Exception):
    """Base class for all package errors."""


class NoValidPlacement(SceneCompError):
    """Rejection sampling exhausted its budget without an admissible pose."""

    def __init__(self, attempts: int, reason: str = ""):
        self.attempts = attempts
        msg = f"no valid placement after {attempts} attempts"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class OutOfGrid(SceneCompError):
    """Query point lies outside the ground-elevation grid."""


class NonPositiveGap(SceneCompError):
    """Car-following gap <= 0: the caller let two actors collide."""


class CollisionDetected(SceneCompError):
    """Simulated actors ended a step closer than the 2 m safety distance."""


class NoCandidate(SceneCompError):
    """Every retrieval candidate was rejected by the view filters."""


class EmptyInput(SceneCompError):
    """Operation requires a non-empty point set or mesh."""


class DegenerateFace(SceneCompError):
    """A face has (numerically) zero area; its normal is undefined."""


class DimensionMismatch(SceneCompError):
    """Raster operands do not share the same pixel dimensions."""


class SingularCamera(SceneCompError):
    """The left 3x3 block of the projection matrix is not invertible."""


class NonFiniteLoss(SceneCompError):
    """Shape optimization produced NaN/inf; reports the iteration."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"loss became non-finite at iteration {iteration}")


class BankFormatError(SceneCompError):
    """Asset-bank manifest is malformed or references missing files."""


class ConfigError(SceneCompError):
    """Scenario configuration is invalid or references missing files."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: config/validation problems exit 2,
numerical failures exit 3, IO problems exit 4.
"""


class SurfelError(Exception):
    """Base class for all package errors."""


class InvalidParam(SurfelError):
    """A constructor or operation argument violates its preconditions."""


class DegenerateFrame(InvalidParam):
    """Camera up vector is parallel to the viewing direction."""


class OutOfBounds(InvalidParam):
    """Pixel index outside the camera resolution."""


class NonPositiveDepth(InvalidParam):
    """Depth map contains zero, negative, or non-finite entries."""


class ResolutionMismatch(InvalidParam):
    """Grid shapes disagree with each other or with the camera resolution."""


class LightAtSurfel(SurfelError):
    """A point light coincides with a surfel position (distance < 1e-8)."""

    def __init__(self, pixel, light_index):
        self.pixel = pixel
        self.light_index = light_index
        super().__init__(
            f"light {light_index} coincides with surfel at pixel {pixel}"
        )


class NonFiniteOutput(SurfelError):
    """A numerical result contains NaN or Inf."""


class EmptySet(InvalidParam):
    """Point-set metric invoked on an empty set."""


class EmptyMask(InvalidParam):
    """An operation restricted by a mask received a mask with no pixels set."""


class PlacementFailure(SurfelError):
    """Object placement rejected too many times (overcrowded room)."""


class SamplingFailure(SurfelError):
    """Shape sampling exhausted its retry budget."""


class Diverged(SurfelError):
    """Optimization produced a non-finite loss."""

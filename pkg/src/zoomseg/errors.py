"""Exception hierarchy shared by all zoomseg modules."""


class ZoomSegError(Exception):
    """Base class for every error raised by this package."""


class ZeroSumPixel(ZoomSegError):
    """A probability vector sums to (almost) zero and cannot be normalized."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"probability vector at pixel ({row}, {col}) sums to ~0")


class DimMismatch(ZoomSegError):
    """Two maps that must share dimensions do not."""


class OutOfBounds(ZoomSegError):
    """A window or pixel coordinate falls outside the target map."""


class ConfigError(ZoomSegError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    """The config file could not be read or decoded."""


class ValidationError(ConfigError):
    """A parsed config violates an invariant; the message names it."""


class NonMonotonicScales(ValidationError):
    """Scale levels are not strictly decreasing."""


class EndpointsMismatch(ValidationError):
    """Scale levels do not start at the image size or end at the processing size."""


class IndivisibleGrid(ValidationError):
    """A scale level does not evenly tile the image (strict mode)."""


class EvenKernel(ValidationError):
    """Median kernel sizes must be odd."""


class NoDefinedClasses(ZoomSegError):
    """Every class has an empty union; IoU is undefined."""


class EmptyInput(ZoomSegError):
    """An evaluation or distribution was requested over zero items."""


class BackendFailure(ZoomSegError):
    """A segmentation or combiner backend failed (CLI exit code 3)."""


class ProtocolError(BackendFailure):
    """Malformed bytes on the external-process wire or in a tensor file."""


class ServerError(BackendFailure):
    """The external server answered with a nonzero status."""

    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(f"server error (status {status}): {message}")


class Timeout(BackendFailure):
    """The external server did not answer within the deadline."""

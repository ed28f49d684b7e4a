"""Exception hierarchy shared across the package."""


class DedaError(Exception):
    """Base class for all errors raised by this package."""


class PlacementError(DedaError):
    """A sprite cannot be placed on the canvas under the given constraints."""


class NoForegroundError(DedaError):
    """Mask selects no foreground pixel (nothing to cut out)."""


class NoBackgroundError(DedaError):
    """Mask covers the whole image (no background left to keep)."""


class DegenerateHoleError(DedaError):
    """Hole covers so much of the image that pyramid filling is meaningless."""


class InvalidStrengthError(DedaError):
    """Edit strength leaves no timestep to work with."""


class RetryExhaustedError(DedaError):
    """Repeated re-draws failed to produce a usable sample."""


class IntegrityError(DedaError):
    """A bank manifest violates its referential or file-level invariants."""


class SamplingError(DedaError):
    """No eligible record exists for the requested draw."""


class BackendError(DedaError):
    """A denoiser or remote generation backend misbehaved."""

    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class DivergedError(DedaError):
    """An optimization produced non-finite values."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []

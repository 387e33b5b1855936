"""Exception types raised across the pipeline."""


class HypoKernelError(Exception):
    pass


class DriftNotStationary(HypoKernelError):
    """The drift does not vanish at the base point."""


class HormanderUndecided(HypoKernelError):
    """The filtration did not reach full rank within the weight cap."""

    def __init__(self, message, dims=None):
        super().__init__(message)
        self.dims = dims


class TruncationTooLow(HypoKernelError):
    """A truncated series does not retain enough degrees for the requested check."""


class NotLinear(HypoKernelError):
    """The system is not of the linear-drift / constant-input form."""


class InsufficientHits(HypoKernelError):
    """Too few samples fall inside the density boxes."""


class SimulationError(HypoKernelError):
    """Too many non-finite samples were discarded."""

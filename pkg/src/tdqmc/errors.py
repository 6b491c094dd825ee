"""Exception types shared across the package."""


class TdqmcError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(TdqmcError):
    """Two fields that must share a grid do not."""


class OutsideGridError(TdqmcError):
    """A position left the simulation box (walker escaped the grid)."""


class NodeError(TdqmcError):
    """A wave amplitude was evaluated too close to a node (|w| < 1e-12)."""


class DegenerateEnsembleError(TdqmcError):
    """An ensemble statistic needs at least 2 walkers."""


class UnstableStepError(TdqmcError):
    """A propagation step produced non-finite amplitudes."""


class ConvergenceError(TdqmcError):
    """An iterative procedure hit its step budget before converging.

    Carries the partial energy trace in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class TruncationError(TdqmcError):
    """Retained spectrum too small for the requested temperature.

    Carries the offending Boltzmann weight in ``weight``.
    """

    def __init__(self, message, weight):
        super().__init__(message)
        self.weight = weight


class BracketError(TdqmcError):
    """A scalar root bracket could not be established.

    Carries the scanned (scale, value) pairs in ``scanned``.
    """

    def __init__(self, message, scanned=None):
        super().__init__(message)
        self.scanned = scanned

"""Exception hierarchy shared by every module in the package."""


class ReaperError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ReaperError, ValueError):
    """Malformed data: wrong shape, non-finite entries, bad parameter ranges."""


class InvariantError(ReaperError, ValueError):
    """A value object failed one of its structural invariants."""


class ConvergenceError(ReaperError, RuntimeError):
    """An iterative method ran out of iterations.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best

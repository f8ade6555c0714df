"""Exception hierarchy shared by all renewalopt modules."""


class RenewalOptError(Exception):
    """Base class for all errors raised by renewalopt."""


class ValidationError(RenewalOptError, ValueError):
    """Input data or parameters violate a documented invariant."""


class InfeasibleError(RenewalOptError):
    """No point satisfies the constraints.

    ``diagnostic`` carries the closest-to-feasible point or value the solver
    found, when one is available.
    """

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic


class SolverError(RenewalOptError):
    """An iterative solver could not make progress.

    ``iterate`` holds the last point reached so callers can inspect it.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate

"""Exception types shared across the package."""


class NumericsError(RuntimeError):
    """A numerical routine produced non-finite moments from finite inputs."""


class SolverDivergenceError(RuntimeError):
    """The solver state went non-finite and the run was aborted.

    Carries ``diagnostic`` (a structured text dump of the per-iteration
    records up to the last valid one) and ``iteration`` (the index of the
    iteration that produced the non-finite state).
    """

    def __init__(self, message, diagnostic="", iteration=None):
        super().__init__(message)
        self.diagnostic = diagnostic
        self.iteration = iteration

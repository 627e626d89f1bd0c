"""Exception hierarchy shared by all modules."""


class EvosurfError(Exception):
    """Base class for all package errors."""


class GeometryError(EvosurfError):
    """Invalid mesh, degenerate element or failed flow integration."""


class DomainError(EvosurfError, ValueError):
    """A singular potential was evaluated outside its domain."""


class NewtonError(EvosurfError):
    """Newton iteration did not converge.

    Attributes
    ----------
    history : list of float
        Scaled residual norms, one per iteration.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class MeanValueError(EvosurfError, ValueError):
    """Input to the inverse Laplacian is not mean-zero."""


class ConfigError(EvosurfError, ValueError):
    """Bad configuration file or value."""


class SimulationError(EvosurfError):
    """A time step failed during :func:`evosurf_ch.solver.run_simulation`.

    The partial result computed before the failure is kept in ``result``.
    """

    def __init__(self, message, step, t, cause=None, result=None):
        super().__init__(f"step {step} (t = {t:.6g}): {message}")
        self.step = step
        self.t = t
        self.cause = cause
        self.result = result

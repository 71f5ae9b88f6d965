class DualDOError(Exception):
    """Base class for errors raised by this package."""


class RankLoss(DualDOError):
    """The deterministic basis became (numerically) linearly dependent.

    ``t`` is the time of the offending state, i.e. the discrete maximal time.
    ``trajectory`` holds the accepted part of the run when raised from
    :func:`dualdo.integrator.integrate`.
    """

    def __init__(self, t, sigma_min=None, message=None, trajectory=None, event=None):
        self.t = t
        self.sigma_min = sigma_min
        self.trajectory = trajectory
        self.event = event
        super().__init__(message or f"rank loss at t={t!r} (sigma_min={sigma_min!r})")


class NonFinite(DualDOError, FloatingPointError):
    """Overflow or NaN in an evolved quantity."""


class NotOrthonormal(DualDOError, ValueError):
    """The stochastic basis is too far from orthonormal for the requested operation."""


class ConfigError(DualDOError, ValueError):
    """Invalid run configuration; ``line`` points into the config file when known."""

    def __init__(self, message, key=None, line=None, path=None):
        self.key = key
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)

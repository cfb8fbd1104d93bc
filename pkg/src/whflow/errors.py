"""Exception types raised by the simulator."""


class WHFError(Exception):
    """Base class for all simulator errors."""


class PositivityError(WHFError, ValueError):
    """A density that must be strictly positive has a nonpositive cell."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SolverError(WHFError, RuntimeError):
    """An iterative solver hit its iteration cap without converging."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class FixedPointDivergence(SolverError):
    """Implicit-midpoint fixed-point iteration failed to converge."""


class NodalPointError(WHFError, ValueError):
    """Wave function amplitude vanishes, so the Madelung variables are undefined."""


class ConfigError(WHFError, ValueError):
    """Scenario configuration is invalid.

    ``violations`` holds one human-readable string per broken rule.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

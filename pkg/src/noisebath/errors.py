"""Package-level error types, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


class NumericalInvariantError(RuntimeError):
    """A density-matrix invariant (trace, Hermiticity, positivity) broke (exit code 3)."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to converge within its budget (exit code 4)."""

"""Exception hierarchy for dualbatch.

Everything raised deliberately by the library derives from DualbatchError so
the CLI can map failures to exit codes in one place.
"""


class DualbatchError(Exception):
    """Base class for all dualbatch errors."""


class LoadError(DualbatchError):
    """Malformed input data. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(DualbatchError):
    """Invalid parameter combination or value."""


class FeasibilityError(DualbatchError):
    """A dual iterate left the feasible region of its loss (state corruption)."""


class SupportTooLargeError(DualbatchError):
    """Exact enumeration of the sampling support was refused; use Monte Carlo."""

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"sampling support has {size} subsets (limit {limit}); "
            "use Monte Carlo verification instead"
        )
        self.size = size
        self.limit = limit


class PowerIterationError(DualbatchError):
    """Power iteration failed to converge. Carries the last estimate."""

    def __init__(self, message: str, estimate: float, rel_change: float, iterations: int):
        super().__init__(message)
        self.estimate = estimate
        self.rel_change = rel_change
        self.iterations = iterations

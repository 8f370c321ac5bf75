"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class StressScoreError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(StressScoreError, ValueError):
    """Bad configuration or malformed user input."""

    exit_code = 2


class DataError(StressScoreError, ValueError):
    """Market data could not be read or aligned."""

    exit_code = 4


class FitError(StressScoreError, RuntimeError):
    """A distribution fit failed. ``diagnostics`` carries the optimizer state."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SolverError(StressScoreError, RuntimeError):
    """The plausible-scenario optimizer could not produce a usable point."""

    exit_code = 3

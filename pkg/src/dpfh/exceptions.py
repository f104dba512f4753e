"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: parse errors exit 2, solver failures
exit 3, data invariant violations exit 4.
"""


class DpfhError(Exception):
    """Base class for all package errors."""


class ParseError(DpfhError, ValueError):
    """Malformed input file (carries a line-oriented message)."""


class DataError(DpfhError, ValueError):
    """A data invariant does not hold (non-positive y, rank deficiency, ...)."""


class SolverError(DpfhError, RuntimeError):
    """A numerical solver failed; ``diagnostics`` holds bracket/grid info."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

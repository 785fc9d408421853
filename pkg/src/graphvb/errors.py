"""Exception types shared across the package."""


class GraphVBError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GraphVBError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NonConvergent(GraphVBError):
    """A series was truncated before reaching the requested tolerance."""


class QuadratureFailure(GraphVBError):
    """Adaptive quadrature exhausted its budget or returned an unusable result."""


class DegenerateEdge(GraphVBError):
    """All determinant coefficients of an edge vanish; the edge weight is zero."""


class EdgeUpdateSkipped(GraphVBError):
    """An edge update failed numerically; the previous value is retained."""


class NotPositiveDefinite(GraphVBError):
    """A matrix expected to be positive definite failed to factorize."""

    def __init__(self, msg: str, iteration: int | None = None):
        super().__init__(msg)
        self.iteration = iteration


class DimensionMismatch(GraphVBError, ValueError):
    """Operands have incompatible shapes."""


class EigenFailure(GraphVBError):
    """Symmetric eigendecomposition did not converge."""


class ZeroReference(GraphVBError, ValueError):
    """A normalized metric was requested against a zero reference."""


class InvalidParams(GraphVBError, ValueError):
    """Generator or operator parameters violate their preconditions."""


class ParseError(GraphVBError, ValueError):
    """A data file could not be parsed; carries row/column diagnostics."""

    def __init__(self, msg: str, row: int | None = None, column: int | None = None):
        super().__init__(msg)
        self.row = row
        self.column = column


class TooFewSnapshots(GraphVBError, ValueError):
    """A dataset contained fewer usable snapshots than required."""


class ConfigError(GraphVBError, ValueError):
    """An experiment configuration is invalid; message names the field."""

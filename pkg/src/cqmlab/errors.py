"""Exception hierarchy shared by all cqmlab modules."""


class CqmError(Exception):
    """Base class for all cqmlab errors."""


class DimensionError(CqmError):
    """Unit-tag mismatch in a dimension-checked operation."""


class DomainError(CqmError):
    """A value is outside the mathematically admissible domain."""


class ExpressionError(CqmError):
    """A scenario expression string could not be parsed or uses unknown symbols."""


class StructureError(CqmError):
    """Shapes or grids of two objects are incompatible."""


class ResolutionError(CqmError):
    """The grid is too coarse for the requested computation."""


class DegeneracyError(CqmError):
    """A metric or cosymplectic form is degenerate at an evaluation point."""


class ChartBoundaryError(CqmError):
    """A trajectory left the chart box.  Carries the exit time."""

    def __init__(self, message, t_exit):
        super().__init__(message)
        self.t_exit = t_exit


class ClassificationError(CqmError):
    """An operation requires a function class (e.g. quantisable) the input lacks."""


class InternalConsistencyError(CqmError):
    """A result violated an internal closure property (e.g. residual cubic terms)."""


class StencilError(CqmError):
    """A required finite-difference stencil (usually in time) is unavailable."""


class TestStateError(CqmError):
    """A test state carries non-negligible mass near the chart boundary."""


class ConvergenceError(CqmError):
    """An iterative solver did not reach the requested residual."""

    def __init__(self, message, attained=None):
        super().__init__(message)
        self.attained = attained


class NormalizationError(CqmError):
    """A wavefunction was expected to be normalized and is not."""


class NumericalError(CqmError):
    """A linear solve or factorization failed."""


class ConfigError(CqmError):
    """Scenario configuration is malformed.  Carries the offending field path."""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path

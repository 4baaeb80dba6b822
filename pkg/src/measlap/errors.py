"""Exception hierarchy shared by all measlap modules."""


class MeasLapError(Exception):
    """Base class for every error raised by this package."""


class ModelError(MeasLapError, ValueError):
    """Invalid symmetric-measure model input."""


class AsymmetricKernel(ModelError):
    pass


class NegativeEntry(ModelError):
    pass


class NonFiniteEntry(ModelError):
    pass


class ZeroDegree(ModelError):
    pass


class ConflictingEdge(ModelError):
    pass


class OverlappingCells(ModelError):
    pass


class IncompleteCover(ModelError):
    pass


class Disconnected(MeasLapError):
    """Two cells (or sites) lie in different components of the support graph."""


class DefectModel(MeasLapError):
    """An identity that needs P(1) = 1 was requested on a sub-Markov model."""


class RecurrentError(MeasLapError):
    """Green's operator does not exist: 1 is (numerically) in the spectrum of P."""


class EigSolverFailure(MeasLapError):
    pass


class SeriesTruncationBudgetExceeded(MeasLapError):
    pass


class BudgetExceeded(MeasLapError):
    """Exact path-tree enumeration would exceed the term budget."""


class EmptySpectralWindow(MeasLapError):
    pass


class ConfigError(MeasLapError):
    """Base for configuration problems (exit code 2 on the command line)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownKey(ConfigError):
    pass


class BadTolerance(ConfigError):
    pass

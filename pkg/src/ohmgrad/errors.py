"""Exception hierarchy shared by all ohmgrad modules."""


class OhmgradError(Exception):
    """Base class for every error raised by this package."""


class GraphError(OhmgradError, ValueError):
    pass


class InvalidGraphError(GraphError):
    """Self-loops, parallel edges or out-of-range node ids."""


class ConnectivityError(GraphError):
    pass


class SelectorError(OhmgradError, ValueError):
    pass


class SelectorRangeError(SelectorError):
    pass


class SelectorDuplicateError(SelectorError):
    pass


class SelectorOverlapError(SelectorError):
    pass


class NumericalError(OhmgradError, ArithmeticError):
    """A linear-algebra invariant failed or a solve was ill-posed."""


class ConditioningWarning(UserWarning):
    pass


class ConvergenceError(OhmgradError, RuntimeError):
    pass


class InstabilityError(ConvergenceError):
    pass


class DegenerateFitError(OhmgradError, ValueError):
    pass


class SparseDepositionError(OhmgradError, ValueError):
    pass


class InsufficientChordsError(OhmgradError, ValueError):
    pass


class DivergenceError(OhmgradError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DatasetParseError(OhmgradError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DatasetSchemaError(DatasetParseError):
    pass


class ConfigError(OhmgradError, ValueError):
    pass

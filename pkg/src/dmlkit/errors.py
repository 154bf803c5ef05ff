"""Exception hierarchy shared across the package."""


class DmlError(Exception):
    """Base class for all errors raised by dmlkit."""


class ConfigError(DmlError, ValueError):
    """Invalid configuration, learner spec or CLI arguments."""


# data backend
class DuplicateRole(DmlError, ValueError):
    pass


class UnknownColumn(DmlError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NonFiniteValue(DmlError, ValueError):
    pass


class ParseError(DmlError, ValueError):
    """CSV parse failure; ``row`` and ``col`` are 1-based data-row / column numbers."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class IndexOutOfRange(DmlError, IndexError):
    pass


# resampling
class InvalidFoldCount(DmlError, ValueError):
    pass


class NotAPartition(DmlError, ValueError):
    pass


class LengthMismatch(DmlError, ValueError):
    pass


# learners
class SingularDesign(DmlError, ValueError):
    pass


class NonConvergence(DmlError, RuntimeError):
    """Iterative solver hit its iteration cap; ``last_iterate`` holds the final coefficients."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SeparationDetected(DmlError, RuntimeError):
    pass


class EmptyGrid(DmlError, ValueError):
    pass


# scores
class BadCustomReturn(DmlError, ValueError):
    pass


class PropensityOutOfRange(DmlError, ValueError):
    pass


class ZeroTreatedShare(DmlError, ValueError):
    pass


# estimation
class DegenerateFold(DmlError, ArithmeticError):
    pass


class DegenerateScore(DmlError, ArithmeticError):
    pass


class InvalidLevel(DmlError, ValueError):
    pass


class NonBinaryTreatment(DmlError, ValueError):
    pass


class NoInstrument(DmlError, ValueError):
    pass


class EmptyArm(DmlError, ValueError):
    pass


# inference
class FitNotRun(DmlError, RuntimeError):
    pass


class BootstrapNotRun(DmlError, RuntimeError):
    pass


class InvalidPValue(DmlError, ValueError):
    pass

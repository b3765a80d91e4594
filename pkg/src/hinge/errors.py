"""Exception hierarchy shared by every subsystem."""


class HingeError(Exception):
    """Base class for all errors raised by this package."""


# graph
class TypeMismatch(HingeError, TypeError):
    pass


class GraphFrozen(HingeError, RuntimeError):
    pass


class GraphNotFrozen(HingeError, RuntimeError):
    pass


class SelfLoopRejected(HingeError, ValueError):
    pass


class SchemaError(HingeError, ValueError):
    pass


# sampler
class AnchorTypeMismatch(HingeError, TypeError):
    pass


class PrefixMismatch(HingeError, ValueError):
    pass


# tensor engine
class ShapeMismatch(HingeError, ValueError):
    pass


class IndexOutOfRange(HingeError, IndexError):
    pass


class NonPositiveTemperature(HingeError, ValueError):
    pass


class NonScalarLoss(HingeError, ValueError):
    pass


class NonFiniteValue(HingeError, FloatingPointError):
    pass


class CheckpointError(HingeError, ValueError):
    pass


# selection
class EmptyBuffer(HingeError, ValueError):
    pass


class BudgetExceedsCandidates(HingeError, ValueError):
    pass


# trainer
class LabelOutOfRange(HingeError, ValueError):
    pass


class EmptySplit(HingeError, ValueError):
    pass


class DivergedLoss(HingeError, FloatingPointError):
    pass


class EmptyEvalSet(HingeError, ValueError):
    pass


# io
class DataError(HingeError):
    """Anything wrong with on-disk inputs; the CLI maps these to exit code 2."""


class MissingFile(DataError, FileNotFoundError):
    pass


class MalformedLine(DataError, ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class MissingData(DataError, ValueError):
    pass


class BadFractions(HingeError, ValueError):
    pass


class ConfigError(HingeError, ValueError):
    pass

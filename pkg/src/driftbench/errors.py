"""Exception hierarchy shared by every driftbench module."""


class DriftbenchError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class DimensionMismatch(DriftbenchError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotPositiveDefinite(DriftbenchError, ValueError):
    pass


class InsufficientPoints(DriftbenchError, ValueError):
    pass


class DegenerateDesign(DriftbenchError, ValueError):
    pass


class EmptyInput(DriftbenchError, ValueError):
    pass


class ParseError(DriftbenchError, ValueError):
    def __init__(self, line, reason, path=None):
        self.line = line
        self.reason = reason
        self.path = path
        where = f"{path}:{line}" if path is not None else f"line {line}"
        super().__init__(f"{where}: {reason}")


class ForeignKeyError(DriftbenchError, ValueError):
    pass


class EmptyDatabase(DriftbenchError, ValueError):
    pass


class InvalidRange(DriftbenchError, ValueError):
    pass


class UnknownAp(DriftbenchError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownRp(DriftbenchError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidConfig(DriftbenchError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ApNotAlive(DriftbenchError, ValueError):
    pass


class TooFewSamples(DriftbenchError, ValueError):
    pass


class NonFiniteFeature(DriftbenchError, ValueError):
    pass


class NoDetections(DriftbenchError, ValueError):
    pass


class OutOfRange(DriftbenchError, ValueError):
    pass


class NonFiniteLoss(DriftbenchError, FloatingPointError):
    pass


class UnknownLabel(DriftbenchError, ValueError):
    pass


class EmptyTrainSlice(DriftbenchError, ValueError):
    pass


class EmptyTestDay(DriftbenchError, ValueError):
    pass


class ModelFormatError(DriftbenchError, ValueError):
    pass

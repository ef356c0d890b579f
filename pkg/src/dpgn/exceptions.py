"""Exception hierarchy shared by every dpgn module."""


class DPGNError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(DPGNError, ValueError):
    pass


class OutOfRangeIndex(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class NonPositiveWeight(GraphError):
    pass


class ZeroEdgeWeight(GraphError):
    pass


class LengthMismatch(DPGNError, ValueError):
    """An attribute array does not match the graph it is applied to."""


class ShapeMismatch(DPGNError, ValueError):
    pass


class NonFiniteValue(DPGNError, FloatingPointError):
    pass


class NonScalarOutput(DPGNError, ValueError):
    pass


class BadInitCount(DPGNError, ValueError):
    pass


class NonFiniteState(DPGNError, FloatingPointError):
    """A simulation produced inf/nan; ``step`` is the offending step index."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class NonFiniteLoss(DPGNError, FloatingPointError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class TooFewStates(DPGNError, ValueError):
    pass


class FeatureDimMismatch(DPGNError, ValueError):
    pass


class ParseError(DPGNError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class MisalignedTime(DPGNError, ValueError):
    pass


class UnknownEdgeTypeName(DPGNError, KeyError):
    pass


class EmptyDataset(DPGNError, ValueError):
    pass


class StabilityWarning(UserWarning):
    """Explicit time step exceeds the linear stability bound."""

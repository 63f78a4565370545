"""Exception hierarchy shared by every module of the package."""


class SplError(Exception):
    """Base class for all errors raised by :mod:`spl`."""

    exit_code = 2


class CircuitError(SplError):
    pass


class CyclicGraph(CircuitError):
    pass


class DanglingChild(CircuitError):
    pass


class MissingVariable(CircuitError):
    pass


class ParamShapeMismatch(CircuitError):
    pass


class ScopeTooLarge(CircuitError):
    exit_code = 3


class StructureError(CircuitError):
    """A circuit lacks a structural property an operation requires."""


class ParseError(SplError):
    pass


class MalformedHeader(ParseError):
    pass


class LiteralOutOfRange(ParseError):
    pass


class UnterminatedClause(ParseError):
    pass


class EmptyVariableSet(SplError):
    pass


class VtreeMismatch(SplError):
    pass


class DuplicateModel(SplError):
    pass


class InconsistentScope(SplError):
    pass


class IncompatibleCircuits(SplError):
    pass


class UnboundXVariable(SplError):
    pass


class InconsistentLabel(SplError):
    pass


class ZeroPartition(SplError):
    pass


class ProbOutOfRange(SplError):
    pass


class NotDeterministicInput(SplError):
    pass


class DimensionMismatch(SplError):
    pass


class InconsistentTrainingLabel(SplError):
    pass


class DivergedLoss(SplError):
    exit_code = 4


class GridTooLarge(SplError):
    exit_code = 3


class ExhaustedSampling(SplError):
    exit_code = 3


class CyclicHierarchy(SplError):
    pass


class LengthMismatch(SplError):
    pass


class InvariantViolation(SplError):
    """An internal guarantee failed; indicates a bug rather than bad input."""

    exit_code = 4

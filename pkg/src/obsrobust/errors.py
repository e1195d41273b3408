"""Exception types.

Errors fall into two families so the CLI can map them to exit codes:
ModelError (bad model or policy input) and NumericError (an analysis that
cannot produce a trustworthy number).
"""


class ObsRobustError(Exception):
    pass


class ModelError(ObsRobustError):
    pass


class NumericError(ObsRobustError):
    pass


class SyntaxError(ModelError):  # noqa: A001 - mirrors the format's error name
    def __init__(self, line, col, expected, text=""):
        self.line = line
        self.col = col
        self.expected = expected
        msg = f"line {line}, col {col}: expected {expected}"
        if text:
            msg += f" (got {text!r})"
        super().__init__(msg)


class SemanticError(ModelError):
    pass


class UnknownAction(ModelError):
    pass


class UnknownObservation(ModelError):
    pass


class DuplicateEdge(ModelError):
    pass


class UnknownBenchmark(ModelError):
    pass


class IndexMismatch(ModelError):
    pass


class ImpossibleObservation(ModelError):
    pass


class UndefinedMemoryUpdate(ModelError):
    """A reachable (node, observation) pair has no successor node."""


class InvalidQuery(ObsRobustError):
    pass


class NonContractive(NumericError):
    pass


class EmptyInterval(NumericError):
    pass


class InfeasibleRow(NumericError):
    pass


class InvalidDistribution(NumericError):
    pass


class Inconclusive(NumericError):
    def __init__(self, msg, lower=None, upper=None, point=None):
        super().__init__(msg)
        self.lower = lower
        self.upper = upper
        self.point = point


class TooLarge(NumericError):
    pass


class UnsupportedPolynomial(NumericError):
    pass


class PreconditionViolated(NumericError):
    pass


class ZeroNominalValue(NumericError, ZeroDivisionError):
    """Relative degradation is undefined because the nominal value is 0."""

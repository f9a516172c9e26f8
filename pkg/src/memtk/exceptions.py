"""Custom exceptions for memtk."""
# ruff: noqa: D101

from typing import ClassVar


class MaxEntError(Exception):
    pass


class FormatError(MaxEntError):
    """Base error for the parameters, events and expressions grammars.

    Every subclass carries a stable ``code`` that the checker and the command line reuse, and the
    1-based line of the offending token when it is known.
    """

    code: ClassVar[str] = "FormatError"

    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeaderError(FormatError):
    code = "MalformedHeader"


class CountMismatchError(FormatError):
    code = "CountMismatch"


class ZeroIndexError(FormatError):
    code = "ZeroIndex"


class DuplicateIndexError(FormatError):
    code = "DuplicateIndex"


class NonPositiveAlphaError(FormatError):
    code = "NonPositiveAlpha"


class InvalidTargetError(FormatError):
    code = "InvalidTarget"


class NonNumericTokenError(FormatError):
    code = "NonNumericToken"


class DuplicateEventError(FormatError):
    code = "DuplicateEvent"


class ArityMismatchError(FormatError):
    code = "ArityMismatch"


class NoConditionalEventsError(FormatError):
    code = "NoConditionalEvents"


class IllegalNestingError(FormatError):
    code = "IllegalNesting"


class NonUnitFrequencyError(FormatError):
    code = "NonUnitFrequency"


class InvariantViolationError(FormatError):
    code = "InvariantViolation"


class ModelError(MaxEntError):
    pass


class UnknownFeatureError(ModelError):
    pass


class ClassMismatchError(ModelError):
    pass


class SymbolOutOfRangeError(ModelError):
    pass


class EstimationError(MaxEntError):
    pass


class EmptyCorpusError(EstimationError):
    pass


class NoSolutionError(EstimationError):
    pass


class ZeroTargetError(EstimationError):
    pass


class CheckerError(MaxEntError):
    pass


class NoInputError(CheckerError):
    pass


class EvaluationError(MaxEntError):
    pass


class IncompatibleInputsError(EvaluationError):
    pass


class CorpusError(MaxEntError):
    pass

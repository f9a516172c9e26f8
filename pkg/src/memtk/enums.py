"""Enums that define the file grammars, feature families and checker findings."""

from enum import Enum, IntEnum, StrEnum


class Block(Enum):
    """Enum that defines the keyword pairs delimiting every block of the three grammars."""

    Parameters = ("begin.parameters", "end.parameters")
    Events = ("begin.events", "end.events")
    Expressions = ("begin.expressions", "end.expressions")
    Marginal = ("begin.marginal", "end.marginal")
    Conditional = ("begin.conditional", "end.conditional")
    Product = ("begin.product", "end.product")
    Sum = ("begin.sum", "end.sum")

    @property
    def begin(self) -> str:  # noqa: D102
        return self.value[0]

    @property
    def end(self) -> str:  # noqa: D102
        return self.value[1]


KEYWORDS = frozenset(keyword for block in Block for keyword in block.value)


def keyword2block(token: str) -> Block | None:
    """Return the block a keyword token opens or closes."""
    for block in Block:
        if token in block.value:
            return block
    return None


class ExitCode(IntEnum):
    """Exit statuses of the command line."""

    Success = 0
    Incompatible = 1
    InputError = 2


class FeatureMode(StrEnum):
    """Markov feature families a corpus can be expanded into."""

    Basic = "basic"
    Overlapping = "overlapping"
    Complemented = "complemented"
    Heterogeneous = "heterogeneous"


class FeatureKind(StrEnum):
    """Kinds of corpus features."""

    Markov = "markov"
    Trigger = "trigger"


class Family(StrEnum):
    """Activation semantics of a feature copy.

    Overlapping features are active whenever their suffix matches. Complemented features are active
    only when no higher order feature of the complemented family is.
    """

    Overlapping = "overlapping"
    Complemented = "complemented"
    Trigger = "trigger"


class Severity(StrEnum):
    """Severity of a checker finding."""

    Error = "ERROR"
    Warning = "WARNING"


class FindingCode(StrEnum):
    """Codes for every finding the checker can emit."""

    # Parameters
    ZeroIndex = "ZeroIndex"
    DuplicateIndex = "DuplicateIndex"
    OverlappingIndex = "OverlappingIndex"
    NonPositiveAlpha = "NonPositiveAlpha"
    InvalidTarget = "InvalidTarget"
    ExtremeAlpha = "ExtremeAlpha"
    TargetAboveOne = "TargetAboveOne"
    # Events
    DuplicateEvent = "DuplicateEvent"
    ActivationMismatch = "ActivationMismatch"
    SymbolOutOfRange = "SymbolOutOfRange"
    UnknownFeature = "UnknownFeature"
    MisplacedMarginal = "MisplacedMarginal"
    MisplacedConditional = "MisplacedConditional"
    OrphanZeroCountEvent = "OrphanZeroCountEvent"
    NoConditionalEvents = "NoConditionalEvents"
    NoActiveFeature = "NoActiveFeature"
    EmptyMarginalBlock = "EmptyMarginalBlock"
    InactiveFeature = "InactiveFeature"
    TargetDiffersFromEmpirical = "TargetDiffersFromEmpirical"
    # Expressions
    NonUnitFrequency = "NonUnitFrequency"
    IllegalNesting = "IllegalNesting"
    FeatureMismatch = "FeatureMismatch"
    MissingEvent = "MissingEvent"

    @property
    def severity(self) -> Severity:
        """Return whether the code blocks compatibility."""
        if self in WARNING_CODES:
            return Severity.Warning
        return Severity.Error


WARNING_CODES = frozenset(
    {
        FindingCode.ExtremeAlpha,
        FindingCode.TargetAboveOne,
        FindingCode.EmptyMarginalBlock,
        FindingCode.InactiveFeature,
        FindingCode.TargetDiffersFromEmpirical,
    }
)

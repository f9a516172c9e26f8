"""Verification of parameters, events and expressions files and of their compatibility."""

import math
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass, field

from loguru import logger

from .enums import FindingCode, Severity
from .estimator import summarize_empirical
from .exceptions import EmptyCorpusError, NoInputError
from .formats import ConditionalEvent, EventsFile, Expression, ExpressionsFile, ParametersFile

EXTREME_ALPHA_LOW = 1e-9
EXTREME_ALPHA_HIGH = 1e9


@dataclass(frozen=True, slots=True)
class Finding:
    """One error or warning with its location in the input files."""

    code: FindingCode
    location: str
    message: str
    detail: str = ""

    @property
    def severity(self) -> Severity:  # noqa: D102
        return self.code.severity

    def format(self, verbose: bool = False) -> str:
        """Return the ``SEVERITY CODE location message`` line written to stderr."""
        line = f"{self.severity} {self.code} {self.location} {self.message}"
        if verbose and self.detail:
            line += f". {self.detail}"
        return line


@dataclass(slots=True)
class Report:
    """Findings of a verification; compatible iff there are no errors."""

    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def compatible(self) -> bool:  # noqa: D102
        return not self.errors

    def add(self, code: FindingCode, location: str, message: str, detail: str = "") -> None:  # noqa: D102
        finding = Finding(code, location, message, detail)
        if finding.severity is Severity.Error:
            self.errors.append(finding)
        else:
            self.warnings.append(finding)

    def extend(self, other: "Report") -> "Report":  # noqa: D102
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)
        return self

    def codes(self, severity: Severity | None = None) -> list[FindingCode]:
        """Return the codes of the findings, optionally of one severity only."""
        return [f.code for f in self.findings() if severity is None or f.severity is severity]

    def findings(self) -> list[Finding]:  # noqa: D102
        return [*self.errors, *self.warnings]

    def summary(self) -> str:  # noqa: D102
        status = "compatible" if self.compatible else "incompatible"
        return f"{len(self.errors)} error(s), {len(self.warnings)} warning(s): files are {status}"


def check_parameters(p: ParametersFile) -> Report:
    """Check indices, alphas and targets of a parameters file."""
    report = Report()
    seen: dict[int, str] = {}
    for block, params in (("marginal", p.marginal), ("conditional", p.conditional)):
        for position, param in enumerate(params, start=1):
            where = f"parameters:{block}#{position}"
            if param.index == 0:
                report.add(
                    FindingCode.ZeroIndex,
                    where,
                    "parameter uses the reserved index 0",
                    "Index 0 is reserved for the slack feature and must not appear in user files.",
                )
            elif param.index in seen:
                same_block = seen[param.index] == block
                report.add(
                    FindingCode.DuplicateIndex if same_block else FindingCode.OverlappingIndex,
                    where,
                    f"index {param.index} already used in the {seen[param.index]} block",
                    "Marginal and conditional indices must be distinct and must not overlap.",
                )
            else:
                seen[param.index] = block
            if not (param.alpha > 0 and math.isfinite(param.alpha)):
                report.add(FindingCode.NonPositiveAlpha, where, f"alpha {param.alpha} is not positive")
            elif not EXTREME_ALPHA_LOW < param.alpha < EXTREME_ALPHA_HIGH:
                report.add(
                    FindingCode.ExtremeAlpha,
                    where,
                    f"alpha {param.alpha} of feature {param.index} is extreme",
                    "A reasonable initial value is 1; extreme alphas signal inconsistent targets.",
                )
            if not (param.target >= 0 and math.isfinite(param.target)):
                report.add(FindingCode.InvalidTarget, where, f"target {param.target} is not finite and >= 0")
            elif param.target > 1:
                report.add(
                    FindingCode.TargetAboveOne,
                    where,
                    f"target {param.target} of feature {param.index} exceeds 1",
                    "Binary features have expectations in [0, 1]; only n-ary features can exceed 1.",
                )
    return report


def _check_indices(
    report: Report,
    where: str,
    activation: int,
    features: tuple[int, ...],
    own: set[int] | None,
    other: set[int] | None,
    misplaced: FindingCode,
) -> None:
    if len(features) != activation:
        report.add(
            FindingCode.ActivationMismatch,
            where,
            f"activation {activation} but {len(features)} indices listed",
            "An n-ary feature of value k is listed k times, so the list length equals the activation.",
        )
    for index in sorted(set(features)):
        if index == 0:
            report.add(FindingCode.ZeroIndex, where, "event lists the reserved index 0")
        elif own is None or other is None or index in own:
            continue
        elif index in other:
            report.add(
                misplaced,
                where,
                f"feature {index} belongs to the other parameter block",
                "Marginal features are implied by the symbol and must not be listed in conditional "
                "events; conditional features must not be listed in marginal events.",
            )
        else:
            report.add(FindingCode.UnknownFeature, where, f"feature {index} is not in the parameters file")


def _check_symbol(report: Report, where: str, symbol: int, p: ParametersFile | None) -> None:
    if p is not None and symbol >= p.alphabet_size:
        report.add(FindingCode.SymbolOutOfRange, where, f"symbol {symbol} not below {p.alphabet_size}")


def check_events(e: EventsFile, p: ParametersFile | None = None, *, evaluation_mode: bool = False) -> Report:
    """Check an events file on its own and, when given, against a parameters file.

    In evaluation mode the frequency rules written for training files (zero-count events in observed
    contexts only, at least one active feature, targets matching the empirical expectations) are
    skipped, since a testing events file legitimately lists zero-count events for expression contexts.
    """
    report = Report()
    marginal_set = {q.index for q in p.marginal} if p else None
    conditional_set = {q.index for q in p.conditional} if p else None

    symbols: set[int] = set()
    for position, event in enumerate(e.marginal, start=1):
        where = f"events:marginal#{position}(y={event.symbol})"
        if event.symbol in symbols:
            report.add(FindingCode.DuplicateEvent, where, "marginal event occurs more than once")
        symbols.add(event.symbol)
        _check_symbol(report, where, event.symbol, p)
        _check_indices(
            report,
            where,
            event.activation,
            event.features,
            marginal_set,
            conditional_set,
            FindingCode.MisplacedConditional,
        )

    context_counts: Counter[int] = Counter()
    for event in e.conditional:
        context_counts[event.context] += event.count
    pairs: set[tuple[int, int]] = set()
    for position, cevent in enumerate(e.conditional, start=1):
        where = f"events:conditional#{position}(x={cevent.context},y={cevent.symbol})"
        if cevent.pair in pairs:
            report.add(FindingCode.DuplicateEvent, where, "conditional event occurs more than once")
        pairs.add(cevent.pair)
        _check_symbol(report, where, cevent.symbol, p)
        _check_indices(
            report,
            where,
            cevent.activation,
            cevent.features,
            conditional_set,
            marginal_set,
            FindingCode.MisplacedMarginal,
        )
        supported = bool(cevent.features) and context_counts[cevent.context] > 0
        if not evaluation_mode and cevent.count == 0 and not supported:
            report.add(
                FindingCode.OrphanZeroCountEvent,
                where,
                "zero-count event activates no conditional feature in an observed context",
                "Each event must have positive frequency or activate a conditional feature in a context "
                "with positive frequency.",
            )

    if not e.conditional:
        report.add(FindingCode.NoConditionalEvents, "events", "the events file has no conditional event")
    elif not evaluation_mode and not _activates_feature(e, context_counts):
        report.add(
            FindingCode.NoActiveFeature,
            "events",
            "no context with positive frequency activates a feature",
        )

    if not e.marginal:
        report.add(
            FindingCode.EmptyMarginalBlock,
            "events:marginal",
            "no marginal events",
            "Without marginal features m(y|x) is uniform for novel contexts.",
        )
    if p is not None:
        _warn_inactive(report, p, e)
        if not evaluation_mode:
            _warn_targets(report, p, e)
    return report


def _activates_feature(e: EventsFile, context_counts: Counter[int]) -> bool:
    if not any(count > 0 for count in context_counts.values()):
        return False
    if any(event.features for event in e.marginal):
        return True
    return any(c.features and context_counts[c.context] > 0 for c in e.conditional)


def _warn_inactive(report: Report, p: ParametersFile, e: EventsFile) -> None:
    listed = {i for event in e.marginal for i in event.features}
    listed.update(i for c in e.conditional for i in c.features)
    for param in p.parameters():
        if param.index and param.index not in listed:
            report.add(
                FindingCode.InactiveFeature,
                f"parameters:feature({param.index})",
                "feature is never active in the events file",
            )


def _warn_targets(report: Report, p: ParametersFile, e: EventsFile) -> None:
    try:
        empirical = summarize_empirical(e).targets_empirical
    except EmptyCorpusError:
        return
    for param in p.parameters():
        expected = empirical.get(param.index, 0.0)
        if not math.isclose(param.target, expected, rel_tol=1e-6, abs_tol=1e-12):
            report.add(
                FindingCode.TargetDiffersFromEmpirical,
                f"parameters:feature({param.index})",
                f"target {param.target} differs from the empirical expectation {expected}",
                "Non-empirical targets may keep the estimation from converging.",
            )


def _expression_events(x: ExpressionsFile) -> Iterator[tuple[str, ConditionalEvent | None]]:
    """Yield every embedded event with its location, and ``None`` where a node nests in its own kind."""
    for position, expression in enumerate(x.expressions, start=1):
        stack: list[tuple[Expression, str, type | None]] = [(expression, f"expressions#{position}", None)]
        while stack:
            node, where, parent = stack.pop()
            if isinstance(node, ConditionalEvent):
                yield where, node
                continue
            kind = type(node)
            if kind is parent:
                yield where, None
            for term_position, term in reversed(list(enumerate(node.terms, start=1))):
                stack.append((term, f"{where}/{kind.__name__.lower()}#{term_position}", kind))


def check_expressions(
    x: ExpressionsFile,
    e: EventsFile | None = None,
    p: ParametersFile | None = None,
    evaluation_mode: bool = True,
) -> Report:
    """Check an expressions file and its consistency with the events and parameters files.

    Every embedded event needs frequency one and the same conditional activation the events file records
    for its pair; an event activating conditional features needs a record in the events file so that
    ``Z(x)`` is complete. The events file itself is checked too, in the given mode.
    """
    report = Report()
    marginal_set = {q.index for q in p.marginal} if p else None
    conditional_set = {q.index for q in p.conditional} if p else None
    records = {c.pair: c for c in e.conditional} if e else {}

    for where, event in _expression_events(x):
        if event is None:
            report.add(FindingCode.IllegalNesting, where, "product inside product or sum inside sum")
            continue
        where = f"{where}(x={event.context},y={event.symbol})"
        if event.count != 1:
            report.add(
                FindingCode.NonUnitFrequency,
                where,
                f"embedded event has frequency {event.count}",
                "Events inside expressions must have frequency one.",
            )
        _check_symbol(report, where, event.symbol, p)
        _check_indices(
            report,
            where,
            event.activation,
            event.features,
            conditional_set,
            marginal_set,
            FindingCode.MisplacedMarginal,
        )
        if e is None:
            continue
        record = records.get(event.pair)
        if record is not None and Counter(record.features) != Counter(event.features):
            report.add(
                FindingCode.FeatureMismatch,
                where,
                f"features {sorted(event.features)} differ from the events file's {sorted(record.features)}",
                "The evaluator needs one activation per pair; the events file record is authoritative.",
            )
        elif record is None and event.features:
            report.add(
                FindingCode.MissingEvent,
                where,
                "conditional features are active but the events file has no record for the pair",
                "Events files for evaluation must list every pair of an expression context that activates "
                "a conditional feature.",
            )
    if e is not None:
        report.extend(check_events(e, p, evaluation_mode=evaluation_mode))
    return report


def verify(
    p: ParametersFile | None = None, e: EventsFile | None = None, x: ExpressionsFile | None = None
) -> Report:
    """Run every applicable check on the supplied files.

    Supplying an expressions file switches the events checks to evaluation mode.

    Raises
    ------
    NoInputError
        No file was supplied.
    """
    if p is None and e is None and x is None:
        raise NoInputError("at least one of parameters, events or expressions is required")
    report = Report()
    if p is not None:
        report.extend(check_parameters(p))
    if x is not None:
        report.extend(check_expressions(x, e, p, evaluation_mode=True))
    elif e is not None:
        report.extend(check_events(e, p, evaluation_mode=False))
    logger.debug("Verification: {}", report.summary())
    return report

import math
from collections.abc import Callable

import pytest

from memtk.checker import Finding, Report, check_events, check_parameters, verify
from memtk.enums import WARNING_CODES, FindingCode, Severity
from memtk.exceptions import NoInputError
from memtk.formats import (
    ConditionalEvent,
    EventsFile,
    ExpressionsFile,
    MarginalEvent,
    Parameter,
    ParametersFile,
    Product,
    Sum,
)

Files = tuple[ParametersFile, EventsFile, ExpressionsFile | None]


def _valid_files() -> tuple[ParametersFile, EventsFile, ExpressionsFile]:
    """Alphabet of two, marginal feature 2 on symbol 0, conditional feature 1 on (0, 1)."""
    params = ParametersFile(2, [Parameter(2, 1.0, 0.75)], [Parameter(1, 1.0, 0.25)])
    events = EventsFile(
        [MarginalEvent(0, 1, (2,))],
        [ConditionalEvent(0, 0, 3, 0), ConditionalEvent(0, 1, 1, 1, (1,))],
    )
    expressions = ExpressionsFile(
        [
            ConditionalEvent(0, 1, 1, 1, (1,)),
            Product((ConditionalEvent(0, 0, 1, 0), ConditionalEvent(0, 1, 1, 1, (1,)))),
        ]
    )
    return params, events, expressions


def _training(mutate: Callable[[ParametersFile, EventsFile], None]) -> Callable[[], Files]:
    def _files() -> Files:
        params, events, _ = _valid_files()
        mutate(params, events)
        return params, events, None

    return _files


def _evaluation(mutate: Callable[[ExpressionsFile], None]) -> Callable[[], Files]:
    def _files() -> Files:
        params, events, expressions = _valid_files()
        mutate(expressions)
        return params, events, expressions

    return _files


def _set(items: list, position: int, value) -> None:
    items[position] = value


SENSITIVITY = [
    (FindingCode.ZeroIndex, _training(lambda p, e: p.conditional.append(Parameter(0, 1.0, 0.0)))),
    (FindingCode.DuplicateIndex, _training(lambda p, e: p.conditional.append(Parameter(1, 1.0, 0.25)))),
    (FindingCode.OverlappingIndex, _training(lambda p, e: p.conditional.append(Parameter(2, 1.0, 0.75)))),
    (FindingCode.NonPositiveAlpha, _training(lambda p, e: _set(p.conditional, 0, Parameter(1, 0.0, 0.25)))),
    (FindingCode.InvalidTarget, _training(lambda p, e: _set(p.conditional, 0, Parameter(1, 1.0, -0.5)))),
    (FindingCode.DuplicateEvent, _training(lambda p, e: e.conditional.append(e.conditional[1]))),
    (FindingCode.DuplicateEvent, _training(lambda p, e: e.marginal.append(MarginalEvent(0, 1, (2,))))),
    (
        FindingCode.ActivationMismatch,
        _training(lambda p, e: _set(e.conditional, 1, ConditionalEvent(0, 1, 1, 2, (1,)))),
    ),
    (
        FindingCode.SymbolOutOfRange,
        _training(lambda p, e: e.conditional.append(ConditionalEvent(0, 5, 1, 0))),
    ),
    (
        FindingCode.UnknownFeature,
        _training(lambda p, e: _set(e.conditional, 1, ConditionalEvent(0, 1, 1, 1, (9,)))),
    ),
    (
        FindingCode.MisplacedMarginal,
        _training(lambda p, e: _set(e.conditional, 1, ConditionalEvent(0, 1, 1, 2, (1, 2)))),
    ),
    (
        FindingCode.MisplacedConditional,
        _training(lambda p, e: _set(e.marginal, 0, MarginalEvent(0, 1, (1,)))),
    ),
    (
        FindingCode.OrphanZeroCountEvent,
        _training(lambda p, e: e.conditional.append(ConditionalEvent(4, 0, 0, 0))),
    ),
    (FindingCode.NoConditionalEvents, _training(lambda p, e: e.conditional.clear())),
    (
        FindingCode.NoActiveFeature,
        _training(lambda p, e: (e.marginal.clear(), _set(e.conditional, 1, ConditionalEvent(0, 1, 1, 0)))),
    ),
    (
        FindingCode.NonUnitFrequency,
        _evaluation(lambda x: x.expressions.append(ConditionalEvent(0, 0, 2, 0))),
    ),
    (
        FindingCode.IllegalNesting,
        _evaluation(lambda x: x.expressions.append(Sum((Sum((ConditionalEvent(0, 0, 1, 0),)),)))),
    ),
    (
        FindingCode.FeatureMismatch,
        _evaluation(lambda x: x.expressions.append(ConditionalEvent(0, 1, 1, 0))),
    ),
    (
        FindingCode.MissingEvent,
        _evaluation(lambda x: x.expressions.append(ConditionalEvent(3, 1, 1, 1, (1,)))),
    ),
]


def test_valid_files_have_no_findings():
    params, events, expressions = _valid_files()
    assert verify(params, events).findings() == []
    assert verify(params, events, expressions).findings() == []
    assert verify(params).findings() == []
    assert verify(x=expressions).findings() == []


def test_every_error_code_is_covered():
    errors = {code for code in FindingCode if code.severity is Severity.Error}
    assert {code for code, _ in SENSITIVITY} == errors


@pytest.mark.parametrize("code, files", SENSITIVITY, ids=[code.value for code, _ in SENSITIVITY])
def test_each_violation_is_reported(code, files):
    params, events, expressions = files()
    report = verify(params, events, expressions)
    assert not report.compatible
    assert code in report.codes(Severity.Error)


def test_t1_is_compatible(t1_params, t1_events):
    report = verify(t1_params, t1_events)
    assert report.compatible
    assert report.codes() == [FindingCode.EmptyMarginalBlock]
    assert report.summary() == "0 error(s), 1 warning(s): files are compatible"


def test_t1_expressions_are_compatible(t1_params, t1_events, data_folder):
    expressions = ExpressionsFile.from_file(data_folder.joinpath("t1.expressions"))
    assert verify(t1_params, t1_events, expressions).compatible


def test_duplicate_events_file(data_folder):
    events = EventsFile.from_file(data_folder.joinpath("duplicate.events"), strict=False)
    report = verify(e=events)
    assert report.codes(Severity.Error) == [FindingCode.DuplicateEvent]
    assert report.errors[0].location == "events:conditional#3(x=0,y=1)"


def test_lenient_parameters_report_duplicate_index():
    params = ParametersFile.from_text(
        "begin.parameters 2 2\nbegin.marginal 0\nend.marginal\n"
        "begin.conditional 2\n1 1.0 0.5\n1 2.0 0.5\nend.conditional\nend.parameters",
        strict=False,
    )
    assert check_parameters(params).codes() == [FindingCode.DuplicateIndex]


@pytest.mark.parametrize(
    "param, code",
    [
        (Parameter(1, 1e12, 0.25), FindingCode.ExtremeAlpha),
        (Parameter(1, 1e-12, 0.25), FindingCode.ExtremeAlpha),
        (Parameter(1, 1.0, 2.0), FindingCode.TargetAboveOne),
    ],
)
def test_parameter_warnings(param, code):
    report = check_parameters(ParametersFile(2, [], [param]))
    assert report.compatible
    assert report.codes() == [code]


def test_nan_alpha_and_target_are_errors():
    report = check_parameters(ParametersFile(2, [], [Parameter(1, math.nan, math.inf)]))
    assert report.codes() == [FindingCode.NonPositiveAlpha, FindingCode.InvalidTarget]


def test_inactive_feature_and_target_warnings():
    params, events, _ = _valid_files()
    params.conditional.append(Parameter(3, 1.0, 0.1))
    report = verify(params, events)
    assert report.compatible
    assert report.codes(Severity.Warning) == [
        FindingCode.InactiveFeature,
        FindingCode.TargetDiffersFromEmpirical,
    ]
    assert report.warnings[0].location == "parameters:feature(3)"


def test_target_tolerance():
    params, events, _ = _valid_files()
    params.conditional[0] = Parameter(1, 1.0, 0.25 * (1 + 1e-9))
    assert verify(params, events).findings() == []
    params.conditional[0] = Parameter(1, 1.0, 0.26)
    assert verify(params, events).codes() == [FindingCode.TargetDiffersFromEmpirical]


def test_evaluation_mode_allows_zero_count_events():
    params, events, expressions = _valid_files()
    events.conditional.append(ConditionalEvent(4, 1, 0, 1, (1,)))
    expressions.expressions.append(ConditionalEvent(4, 1, 1, 1, (1,)))
    assert FindingCode.OrphanZeroCountEvent in verify(params, events).codes()
    assert verify(params, events, expressions).findings() == []


def test_evaluation_mode_allows_featureless_events():
    params = ParametersFile(3, [], [Parameter(1, 1.0, 0.0)])
    events = EventsFile([], [ConditionalEvent(0, 0, 0, 0), ConditionalEvent(0, 1, 0, 1, (1,))])
    report = check_events(events, params, evaluation_mode=True)
    assert report.compatible
    assert check_events(events, params).codes(Severity.Error) == [
        FindingCode.OrphanZeroCountEvent,
        FindingCode.OrphanZeroCountEvent,
        FindingCode.NoActiveFeature,
    ]


def test_expressions_alone_check_structure():
    expressions = ExpressionsFile([Product((Product(()), ConditionalEvent(0, 0, 3, 2, (0, 4))))])
    codes = verify(x=expressions).codes()
    assert codes == [FindingCode.IllegalNesting, FindingCode.NonUnitFrequency, FindingCode.ZeroIndex]


def test_feature_mismatch_ignores_listing_order():
    params = ParametersFile(2, [], [Parameter(1, 1.0, 0.5), Parameter(3, 1.0, 0.5)])
    events = EventsFile([], [ConditionalEvent(0, 0, 1, 2, (1, 3)), ConditionalEvent(0, 1, 1, 1, (1,))])
    expressions = ExpressionsFile([ConditionalEvent(0, 0, 1, 2, (3, 1))])
    assert FindingCode.FeatureMismatch not in verify(params, events, expressions).codes()


def test_verify_requires_a_file():
    with pytest.raises(NoInputError):
        verify()


def test_finding_format():
    finding = Finding(
        FindingCode.ZeroIndex, "parameters:conditional#1", "uses index 0", "Index 0 is reserved."
    )
    assert finding.severity is Severity.Error
    assert finding.format() == "ERROR ZeroIndex parameters:conditional#1 uses index 0"
    assert finding.format(verbose=True).endswith("uses index 0. Index 0 is reserved.")
    warning = Finding(FindingCode.InactiveFeature, "parameters:feature(3)", "never active")
    assert warning.format(verbose=True) == "WARNING InactiveFeature parameters:feature(3) never active"


def test_report_sorts_by_severity():
    report = Report()
    report.add(FindingCode.EmptyMarginalBlock, "events:marginal", "no marginal events")
    report.add(FindingCode.DuplicateEvent, "events:conditional#2", "repeated")
    assert report.codes() == [FindingCode.DuplicateEvent, FindingCode.EmptyMarginalBlock]
    assert report.summary() == "1 error(s), 1 warning(s): files are incompatible"
    assert all(code.severity is Severity.Warning for code in WARNING_CODES)

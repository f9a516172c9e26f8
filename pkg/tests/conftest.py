import numpy as np
import pytest
from loguru import logger
from _pytest.logging import LogCaptureFixture

from memtk.estimator import summarize_empirical
from memtk.formats import ConditionalEvent, EventsFile, MarginalEvent, Parameter, ParametersFile
from memtk.model import Model, build_model

DATA_FOLDER = "tests/data"


@pytest.fixture
def data_folder(pytestconfig):
    return pytestconfig.rootpath.joinpath(DATA_FOLDER)


@pytest.fixture
def caplog(caplog: LogCaptureFixture):
    handler_id = logger.add(
        caplog.handler,
        format="{message}",
        level=0,
        filter=lambda record: record["level"].no >= caplog.handler.level,
        enqueue=False,  # Set to 'True' if your test is spawning child processes.
    )
    yield caplog
    logger.remove(handler_id)


@pytest.fixture
def t1_params(data_folder) -> ParametersFile:
    return ParametersFile.from_file(data_folder.joinpath("t1.params"))


@pytest.fixture
def t1_events(data_folder) -> EventsFile:
    return EventsFile.from_file(data_folder.joinpath("t1.events"))


@pytest.fixture
def t1_model(t1_params, t1_events) -> Model:
    return build_model(t1_params, t1_events)


@pytest.fixture
def t2_model() -> Model:
    params = ParametersFile(3, [Parameter(1, 2.0, 0.1)], [Parameter(2, 4.0, 0.1)])
    events = EventsFile([MarginalEvent(0, 1, (1,))], [ConditionalEvent(5, 0, 1, 1, (2,))])
    return build_model(params, events)


def make_instance(
    rng: np.random.Generator,
    alphabet_size: int,
    n_contexts: int,
    n_marginal: int,
    n_conditional: int,
    *,
    all_pairs: bool = True,
) -> tuple[ParametersFile, EventsFile]:
    """Random binary-feature instance with empirical targets and alphas at 1.

    With ``all_pairs`` every (context, symbol) pair is observed at least once, so the empirical
    distribution is strictly positive and the maximum likelihood alphas are finite.
    """
    marginal_symbols = rng.choice(alphabet_size, size=min(n_marginal, alphabet_size), replace=False)
    marginal = [
        MarginalEvent(int(symbol), 1, (index,))
        for index, symbol in enumerate(sorted(marginal_symbols), start=1)
    ]
    first = len(marginal) + 1
    activations: dict[tuple[int, int], list[int]] = {}
    for index in range(first, first + n_conditional):
        for _ in range(int(rng.integers(1, 4))):
            pair = (int(rng.integers(n_contexts)), int(rng.integers(alphabet_size)))
            activations.setdefault(pair, [])
            if index not in activations[pair]:
                activations[pair].append(index)

    counts: dict[tuple[int, int], int] = {}
    for context in range(n_contexts):
        for symbol in range(alphabet_size):
            if all_pairs:
                counts[context, symbol] = 1 + int(rng.poisson(2))
            elif rng.random() < 0.5:
                counts[context, symbol] = int(rng.poisson(2))
    for pair in activations:
        counts[pair] = max(counts.get(pair, 0), 1)
    for event in marginal:
        pair = (int(rng.integers(n_contexts)), event.symbol)
        counts[pair] = max(counts.get(pair, 0), 1)

    conditional = [
        ConditionalEvent(x, y, count, len(activations.get((x, y), [])), tuple(activations.get((x, y), [])))
        for (x, y), count in sorted(counts.items())
        if count > 0 or (x, y) in activations
    ]
    events = EventsFile(marginal, conditional)
    targets = summarize_empirical(events).targets_empirical
    params = ParametersFile(
        alphabet_size,
        [Parameter(e.features[0], 1.0, targets[e.features[0]]) for e in marginal],
        [Parameter(i, 1.0, targets[i]) for i in range(first, first + n_conditional)],
    )
    return params, events


def make_anchored_instance(
    rng: np.random.Generator,
    alphabet_size: int,
    n_contexts: int,
    n_conditional: int,
    *,
    marginal: bool = True,
) -> tuple[ParametersFile, EventsFile]:
    """Random instance whose binary features never share an event.

    Symbol 0 carries no feature and holds more than three quarters of every context's count, so the
    features never cover most of a context's mass. Symbol 1 carries the marginal feature when
    ``marginal`` is set. Each conditional feature lives in one context on one or two symbols.
    """
    reserved = 2 if marginal else 1
    marginal_events = [MarginalEvent(1, 1, (1,))] if marginal else []
    first = len(marginal_events) + 1
    slots = [(x, y) for x in range(n_contexts) for y in range(reserved, alphabet_size)]
    order = rng.permutation(len(slots))
    free = [slots[int(position)] for position in order]
    n_conditional = min(n_conditional, len(free))

    activations: dict[tuple[int, int], int] = {}
    for index, pair in zip(range(first, first + n_conditional), free, strict=False):
        activations[pair] = index
    for index, (context, _) in zip(range(first, first + n_conditional), free, strict=False):
        spare = [pair for pair in free[n_conditional:] if pair[0] == context and pair not in activations]
        if spare and rng.random() < 0.5:
            activations[spare[0]] = index

    counts: dict[tuple[int, int], int] = {}
    for context in range(n_contexts):
        for symbol in range(1, alphabet_size):
            count = int(rng.poisson(2)) + (1 if (context, symbol) in activations else 0)
            if marginal and symbol == 1 and context == 0:
                count = max(count, 1)
            if count:
                counts[context, symbol] = count
        others = sum(count for (x, _), count in counts.items() if x == context)
        counts[context, 0] = 3 * others + 1 + int(rng.poisson(2))

    conditional = [
        ConditionalEvent(x, y, count, 1, (activations[x, y],))
        if (x, y) in activations
        else ConditionalEvent(x, y, count, 0)
        for (x, y), count in sorted(counts.items())
    ]
    events = EventsFile(marginal_events, conditional)
    targets = summarize_empirical(events).targets_empirical
    params = ParametersFile(
        alphabet_size,
        [Parameter(1, 1.0, targets[1])] if marginal else [],
        [Parameter(i, 1.0, targets[i]) for i in range(first, first + n_conditional)],
    )
    return params, events


@pytest.fixture
def anchored_instance():
    """Factory for seeded instances with disjoint features and a dominant featureless symbol."""

    def _make(seed: int) -> tuple[ParametersFile, EventsFile]:
        rng = np.random.default_rng(seed)
        marginal = bool(rng.integers(2))
        return make_anchored_instance(
            rng,
            alphabet_size=int(rng.integers(3, 7)),
            n_contexts=int(rng.integers(1, 9)),
            n_conditional=int(rng.integers(1, 12)),
            marginal=marginal,
        )

    return _make


@pytest.fixture
def random_instance():
    """Factory for seeded random instances: ``random_instance(seed, **sizes)``."""

    def _make(seed: int, **kwargs) -> tuple[ParametersFile, EventsFile]:
        rng = np.random.default_rng(seed)
        sizes = {
            "alphabet_size": int(rng.integers(2, 7)),
            "n_contexts": int(rng.integers(1, 9)),
            "n_marginal": int(rng.integers(0, 4)),
            "n_conditional": int(rng.integers(1, 10)),
        }
        sizes.update(kwargs)
        return make_instance(rng, **sizes)

    return _make

import math

import numpy as np
import pytest

from memtk.exceptions import ClassMismatchError, SymbolOutOfRangeError, UnknownFeatureError
from memtk.formats import ConditionalEvent, EventsFile, MarginalEvent, Parameter, ParametersFile
from memtk.model import build_model


def test_build_t1(t1_model):
    assert t1_model.alphabet_size == 2
    assert t1_model.marginal_mass == 2.0
    assert t1_model.conditional_index_set == {1}
    assert t1_model.conditional_activations == {(0, 1): (1,)}
    assert t1_model.targets == {1: 0.25}


def test_t2_weights(t2_model):
    assert t2_model.marginal_mass == 4.0
    assert t2_model.weight_marg(0) == 2.0
    assert t2_model.weight_marg(2) == 1.0
    assert t2_model.weight_cond(5, 0) == 8.0
    assert t2_model.weight_cond(5, 1) == 1.0
    assert t2_model.symbols_in(5) == [0]
    assert t2_model.activation(5, 0) == 2
    assert t2_model.activation(4, 0) == 1


def test_t2_partition(t2_model):
    assert t2_model.partition(5) == 10.0
    assert t2_model.partition_bruteforce(5) == 10.0
    assert t2_model.partition(123) == t2_model.marginal_mass
    assert t2_model.cond_prob(5, 0) == pytest.approx(0.8, rel=1e-15)


def test_cond_prob_t1(t1_params, t1_events):
    t1_params.conditional[0] = Parameter(1, 1 / 3, 0.25)
    model = build_model(t1_params, t1_events)
    assert model.cond_prob(0, 1) == pytest.approx(0.25, rel=1e-15)
    assert model.cond_prob(0, 0) == pytest.approx(0.75, rel=1e-15)


def test_refresh_after_update(t2_model):
    t2_model.alphas[1] = 5.0
    assert t2_model.marginal_mass == 4.0
    t2_model.refresh()
    assert t2_model.marginal_mass == 7.0
    assert t2_model.partition(5) == pytest.approx(7.0 + (20.0 - 5.0))


def test_weight_rejects_symbol_outside_alphabet(t2_model):
    with pytest.raises(SymbolOutOfRangeError):
        t2_model.weight_marg(3)


@pytest.mark.parametrize(
    "marginal, conditional, error",
    [
        ([], [ConditionalEvent(0, 1, 1, 1, (9,))], UnknownFeatureError),
        ([], [ConditionalEvent(0, 1, 1, 1, (1,))], ClassMismatchError),
        ([MarginalEvent(0, 1, (2,))], [ConditionalEvent(0, 1, 1, 0, ())], ClassMismatchError),
        ([], [ConditionalEvent(0, 7, 1, 1, (2,))], SymbolOutOfRangeError),
        ([MarginalEvent(4, 1, (1,))], [ConditionalEvent(0, 1, 1, 0, ())], SymbolOutOfRangeError),
    ],
)
def test_build_model_errors(marginal, conditional, error):
    params = ParametersFile(3, [Parameter(1, 1.0, 0.5)], [Parameter(2, 1.0, 0.5)])
    with pytest.raises(error):
        build_model(params, EventsFile(marginal, conditional))


def test_to_parameters_keeps_order_and_targets():
    params = ParametersFile(
        4, [Parameter(7, 1.5, 0.1), Parameter(2, 1.0, 0.2)], [Parameter(5, 2.0, 0.3), Parameter(1, 1.0, 0.4)]
    )
    events = EventsFile([MarginalEvent(0, 1, (7,))], [ConditionalEvent(0, 0, 1, 1, (5,))])
    assert build_model(params, events).to_parameters() == params


def test_nary_feature_counts_its_value():
    params = ParametersFile(2, [], [Parameter(1, 2.0, 0.5)])
    events = EventsFile([], [ConditionalEvent(0, 0, 1, 2, (1, 1))])
    model = build_model(params, events)
    assert model.weight_cond(0, 0) == 4.0
    assert model.partition(0) == 5.0


@pytest.mark.oracle
@pytest.mark.randomized
@pytest.mark.parametrize("seed", range(100))
def test_partition_matches_bruteforce(seed, random_instance):
    params, events = random_instance(seed, all_pairs=False)
    rng = np.random.default_rng(seed)
    model = build_model(params, events)
    for index in model.alphas:
        model.alphas[index] = float(rng.lognormal(0.0, 1.0))
    model.refresh()
    stored = math.fsum([*model.marginal_weight.values(), model.alphabet_size - len(model.marginal_weight)])
    assert model.marginal_mass == pytest.approx(stored, rel=1e-12)
    for context in {event.context for event in events.conditional} | {99}:
        assert model.partition(context) == pytest.approx(model.partition_bruteforce(context), rel=1e-12)
        total = math.fsum(model.cond_prob(context, y) for y in range(model.alphabet_size))
        assert total == pytest.approx(1.0, rel=1e-12)

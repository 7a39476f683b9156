from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
import numpy as np
import pytest

from conftest import make_toy_structure, toy_targets
from local_net import network
from search_mdp.constraints import (DEAD_INPUT, EMPTY_FANIN, FROZEN, STATIC, ConstraintConfig, action_bounds,
                                    check_constraints, random_valid_action, stage_context, update_frozen_paths)
from search_mdp.encoding import (SearchSpace, StateVec, action_bits, action_from_indicator, discretize,
                                 indicator_from_action, transition)
from utils import constant
from utils.errors import ConfigError, ShapeError, StructureError


def test_transition_counts_paths():
    z = np.array([[1, 0, 1], [0, 1, 1]])
    s = StateVec(np.array([1, 1, 0]), 1)
    s_next = transition(s, action_from_indicator(z, 8), 2, 3)
    assert s_next.values.tolist() == [1, 1, 2]
    assert s_next.stage == 2
    assert action_bits(action_from_indicator(z, 8), 2, 3) == '101011'


def test_transition_shape_checks():
    s = StateVec(np.array([1, 1]), 0)
    with pytest.raises(ShapeError):
        transition(s, np.ones(3), 2, 2)
    with pytest.raises(ShapeError):
        transition(s, np.ones(9), 3, 3)


def test_indicator_padding_round_trip():
    z = np.array([[0, 1], [1, 1], [0, 0]])
    a = action_from_indicator(z, 10)
    assert a.tolist() == [0, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    np.testing.assert_array_equal(indicator_from_action(a, 3, 2), z)
    with pytest.raises(ShapeError):
        action_from_indicator(z, 5)


counts = arrays(np.int64, 4, elements=st.integers(0, 50))
bits = arrays(np.int8, 12, elements=st.integers(0, 1))


@given(counts, counts, bits)
def test_transition_is_linear_in_the_state(s1, s2, a):
    t1 = transition(StateVec(s1, 0), a, 4, 3, 4).values
    t2 = transition(StateVec(s2, 0), a, 4, 3, 4).values
    np.testing.assert_array_equal(transition(StateVec(s1 + s2, 0), a, 4, 3, 4).values, t1 + t2)


relaxed = arrays(float, 8, elements=st.floats(0.0, 1.0))


@given(relaxed, relaxed)
def test_discretize_is_monotone(a, b):
    low, high = np.minimum(a, b), np.maximum(a, b)
    assert np.all(discretize(low) <= discretize(high))
    assert set(np.unique(discretize(a))) <= {0, 1}


def test_discretize_threshold():
    assert discretize([0.0, 0.4999, 0.5, 1.0]).tolist() == [0, 0, 1, 1]


def syn1_space():
    template = network.standard_structure(constant.SYN1_LIBRARY, 3, 9, 3)
    return SearchSpace(template, (1, 2))


def test_search_space_dimensions():
    space = syn1_space()
    assert space.n_s == 9
    assert space.n_a == 81
    s = space.first_state()
    assert s.stage == 1
    assert s.values.tolist() == [1] * 9
    assert space.initial_state().values.tolist() == [1, 1, 1, 0, 0, 0, 0, 0, 0]
    assert space.next_searched(1) == 2 and space.next_searched(2) is None
    assert space.is_last_searched(2)


def test_search_space_validation():
    template = syn1_space().template
    with pytest.raises(StructureError):
        SearchSpace(template, ())
    with pytest.raises(StructureError):
        SearchSpace(template, (0, 1))
    with pytest.raises(StructureError):
        SearchSpace(template, (2, 1))


def test_build_replaces_searched_indicators():
    space = SearchSpace(make_toy_structure(), (1,))
    z = np.zeros((6, 1), dtype=np.int8)
    z[0, 0] = 1
    built = space.build({1: z})
    np.testing.assert_array_equal(built.indicators[1], z)
    np.testing.assert_array_equal(built.indicators[2], [[1]])


def test_static_cap():
    cfg = ConstraintConfig(max_factors_per_neuron=2)
    z = np.array([[1], [1], [1]])
    a = action_from_indicator(z, 3)
    s = StateVec(np.array([1, 1, 1]), 1)
    verdict = check_constraints(transition(s, a, 3, 1), a, cfg, 1, constant.MULTIPLICATION, 3, 1)
    assert not verdict and verdict.reason == STATIC
    summed = ConstraintConfig(max_factors_per_neuron=2, max_terms_per_output=3)
    assert check_constraints(transition(s, a, 3, 1), a, summed, 1, constant.SUMMATION, 3, 1)


def test_frozen_connection_must_stay():
    cfg = ConstraintConfig(frozen_paths=frozenset({(1, 0, 0)}))
    a = action_from_indicator(np.array([[0], [1]]), 2)
    s = StateVec(np.array([1, 1]), 1)
    verdict = check_constraints(transition(s, a, 2, 1), a, cfg, 1, constant.MULTIPLICATION, 2, 1)
    assert verdict.reason == FROZEN


def test_dead_input_and_empty_output():
    cfg = ConstraintConfig()
    s = StateVec(np.array([0, 1]), 2)
    a = action_from_indicator(np.array([[1, 0], [0, 0]]), 4)
    s_next = transition(s, a, 2, 2)
    assert check_constraints(s_next, a, cfg, 2, constant.SUMMATION, 2, 2, s=s).reason == DEAD_INPUT
    a = action_from_indicator(np.array([[0, 0], [1, 0]]), 4)
    s_next = transition(s, a, 2, 2)
    verdict = check_constraints(s_next, a, cfg, 2, constant.SUMMATION, 2, 2, s=s, is_last=True)
    assert verdict.reason == EMPTY_FANIN
    assert check_constraints(s_next, a, cfg, 2, constant.SUMMATION, 2, 2, s=s)


def test_neuron_read_by_a_fixed_stage_needs_inputs():
    space = SearchSpace(make_toy_structure(), (1,))
    is_last, next_indicator = stage_context(space, 1)
    assert not is_last
    s = space.first_state()
    a = np.zeros(space.n_a, dtype=np.int8)
    verdict = check_constraints(transition(s, a, 6, 1, space.n_s), a, ConstraintConfig(), 1,
                                constant.MULTIPLICATION, 6, 1, s=s, is_last=is_last, next_indicator=next_indicator)
    assert verdict.reason == EMPTY_FANIN


def test_action_bounds():
    space = SearchSpace(make_toy_structure(), (1,))
    cfg = ConstraintConfig(frozen_paths=frozenset({(1, 5, 0)}))
    s = StateVec(np.array([1, 1, 0, 1, 1, 1]), 1)
    lower, upper = action_bounds(space, 1, cfg, s)
    assert lower.tolist() == [0, 0, 0, 0, 0, 1]
    assert upper.tolist() == [1, 1, 0, 1, 1, 1]


def test_random_actions_are_valid():
    space = syn1_space()
    cfg = ConstraintConfig()
    rng = np.random.default_rng(0)
    s = space.first_state()
    for _ in range(20):
        a = random_valid_action(space, 1, cfg, s, rng)
        assert a is not None
        s_next = transition(s, a, 9, 9, space.n_s)
        assert check_constraints(s_next, a, cfg, 1, constant.MULTIPLICATION, 9, 9, s=s)
        a2 = random_valid_action(space, 2, cfg, s_next, rng)
        if a2 is not None:
            s_last = transition(s_next, a2, 9, 3, space.n_s)
            assert check_constraints(s_last, a2, cfg, 2, constant.SUMMATION, 9, 3, s=s_next, is_last=True)


def test_random_action_keeps_downstream_neurons_fed():
    space = SearchSpace(make_toy_structure(), (1,))
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = random_valid_action(space, 1, ConstraintConfig(), space.first_state(), rng)
        assert 1 <= int(a[:6].sum()) <= constant.MAX_FACTORS_PER_NEURON


def test_correlated_neuron_freezes_its_path(toy_data):
    structure = make_toy_structure()
    X, Y = toy_data
    hidden = (X[:, 0] ** 2 * np.cos(2.5 * X[:, 1]))[:, None]
    cfg = update_frozen_paths(ConstraintConfig(), hidden, toy_targets(X), structure)
    assert cfg.frozen_paths == frozenset({(1, 1, 0), (1, 5, 0), (2, 0, 0)})
    noise = np.random.default_rng(0).normal(size=(len(X), 1))
    unchanged = ConstraintConfig()
    assert update_frozen_paths(unchanged, noise, Y, structure) is unchanged


def test_freezing_never_exceeds_the_factor_cap(toy_data):
    structure = make_toy_structure()
    X, _ = toy_data
    hidden = (X[:, 0] ** 2 * np.cos(2.5 * X[:, 1]))[:, None]
    crowded = ConstraintConfig(frozen_paths=frozenset({(1, 0, 0), (1, 3, 0)}))
    assert update_frozen_paths(crowded, hidden, toy_targets(X), structure) is crowded
    roomy = ConstraintConfig(frozen_paths=frozenset({(1, 0, 0)}))
    cfg = update_frozen_paths(roomy, hidden, toy_targets(X), structure)
    assert cfg.frozen_paths == frozenset({(1, 0, 0), (1, 1, 0), (1, 5, 0), (2, 0, 0)})


def test_config_validation():
    with pytest.raises(ConfigError):
        ConstraintConfig(corr_keep_threshold=0.0)
    with pytest.raises(ConfigError):
        ConstraintConfig(max_factors_per_neuron=0)

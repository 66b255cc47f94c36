import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qunique.errors import EvaluationError, ModelDefinitionError, RateOverflowError, ResourceError, UsageError
from qunique.generator import (
    GeneratorModel,
    StateVec,
    apply_generator,
    enumerate_window,
    shell,
    states_at_level,
    total_rate,
    window_size,
)
from qunique.truncation import Truncation

from .conftest import generator_scale, random_walk_2d

coords2 = st.tuples(st.integers(0, 500), st.integers(0, 500))


def test_statevec_validation():
    s = StateVec((1, 2))
    assert s.level == 3 and s.dimension == 2 and s.coords == (1, 2)
    with pytest.raises(UsageError):
        StateVec((1, -1))
    with pytest.raises(UsageError):
        StateVec((1.5,))


def test_dimension_mismatch_is_usage_error():
    with pytest.raises(UsageError):
        random_walk_2d().transitions_of((1,))


def test_negative_rate_names_state_and_transition():
    m = GeneratorModel(1, lambda s: [((s[0] + 1,), -2.0)], name="neg")
    with pytest.raises(ModelDefinitionError, match=r"\(3,\).*\(4,\)"):
        m.transitions_of((3,))


def test_self_transition_rejected():
    m = GeneratorModel(1, lambda s: [(s, 1.0)])
    with pytest.raises(ModelDefinitionError, match="self-transition"):
        m.transitions_of((0,))


def test_overflowing_rate_raises_instead_of_inf():
    m = GeneratorModel(1, lambda s: [((s[0] + 1,), 2.0 ** s[0])])
    assert total_rate(m, (1023,)) == 2.0 ** 1023
    with pytest.raises(RateOverflowError):
        m.transitions_of((1024,))


def test_nonfinite_f_identifies_state():
    m = random_walk_2d()
    with pytest.raises(EvaluationError, match=r"\(2, 0\)"):
        apply_generator(m, lambda s: math.inf if s == (2, 0) else 0.0, (1, 0))


def test_zero_rates_dropped():
    m = GeneratorModel(1, lambda s: [((s[0] + 1,), 0.0), ((s[0] + 2,), 1.0)])
    assert [t.target for t in m.transitions_of((0,))] == [(2,)]


@given(coords2, st.floats(-3, 3), st.floats(-3, 3))
def test_generator_linearity(state, a, b):
    m = random_walk_2d()
    f = lambda s: math.sin(s[0]) + s[1] ** 2  # noqa: E731
    g = lambda s: 1.0 / (1 + s[0] + 2 * s[1])  # noqa: E731
    af, bg = (lambda s: a * f(s)), (lambda s: b * g(s))
    lhs = apply_generator(m, lambda s: af(s) + bg(s), state)
    rhs = apply_generator(m, af, state) + apply_generator(m, bg, state)
    assert abs(lhs - rhs) <= 1e-12 * generator_scale(m, (af, bg), state)


@given(coords2)
def test_conservative_and_pure(state):
    m = random_walk_2d()
    first = m.transitions_of(state)
    assert first == m.transitions_of(state)
    assert all(r > 0 and t != state for t, r in first)
    assert apply_generator(m, lambda s: 1.0, state) == 0.0
    assert total_rate(m, state) == pytest.approx(sum(r for _, r in first))


@given(st.integers(0, 12), st.integers(1, 3))
def test_level_enumeration(level, d):
    states = list(states_at_level(level, d))
    assert len(states) == math.comb(level + d - 1, d - 1)
    assert len(set(states)) == len(states)
    assert all(sum(s) == level and len(s) == d for s in states)
    assert states == sorted(states)


@given(st.integers(0, 25))
def test_window_nesting_and_boundary_closure(cap):
    m = random_walk_2d()
    small, big = enumerate_window(m, cap), enumerate_window(m, cap + 1)
    assert len(small) == window_size(cap, 2)
    assert big.states[:len(small)] == small.states
    inside = set(small.states)
    for s in small.states:
        for t, _ in m.transitions_of(s):
            assert t in inside or t in small.boundary
    assert all(sum(b) == cap + 1 for b in small.boundary)
    assert set(small.boundary) <= set(big.states)
    assert len(shell(small, cap)) == cap + 1


def test_truncation_matches_fresh_enumeration():
    m = random_walk_2d()
    tr = Truncation(m)
    for cap in (3, 10, 7, 20):
        fresh = enumerate_window(m, cap)
        w = tr.window(cap)
        assert w.states == fresh.states and w.boundary == fresh.boundary


def test_window_resource_limit():
    with pytest.raises(ResourceError, match="smaller level_cap"):
        enumerate_window(random_walk_2d(), 10_000, max_states=1000)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qunique.errors import ModelDefinitionError, UsageError
from qunique.generator import apply_generator, enumerate_window
from qunique.zoo import (
    FIXTURES,
    SchloglParams,
    birth_death,
    build_fixture,
    interleaved,
    nth_prime,
    pure_birth,
    schlogl,
)


def test_nth_prime():
    assert [nth_prime(n) for n in range(1, 11)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert nth_prime(10_000) == 104_729


def test_pure_birth_rejects_nonpositive_rate():
    with pytest.raises(ModelDefinitionError):
        pure_birth(lambda n: n).transitions_of((0,))


def test_birth_death_requires_a0_zero():
    with pytest.raises(ModelDefinitionError, match="a\\(0\\)"):
        birth_death(lambda n: 1.0, lambda n: 1.0)


def test_schlogl_single_site_example():
    m = schlogl(SchloglParams(sites=1))
    assert sorted(m.transitions_of((2,))) == [((1,), 2.0), ((3,), 3.0)]


def test_schlogl_two_site_diffusion():
    m = schlogl(SchloglParams(sites=2))
    rates = dict(m.transitions_of((1, 0)))
    assert rates[(0, 1)] == 1.0


def test_schlogl_params_validation():
    with pytest.raises(UsageError):
        SchloglParams(sites=0)
    with pytest.raises(UsageError):
        SchloglParams(beta0=-1)
    with pytest.raises(UsageError):
        SchloglParams(sites=2, p=np.array([[0, 0.5], [1, 0]]))
    p = SchloglParams(sites=4).p
    assert np.allclose(p.sum(axis=1), 1, atol=1e-12) and np.all(np.diag(p) == 0)


def _check_level_neutral(d, cap):
    m = schlogl(SchloglParams(sites=d))
    for s in enumerate_window(m, cap).states:
        level = sum(s)
        for t, _ in m.transitions_of(s):
            assert abs(sum(t) - level) <= 1
            if sum(t) == level:
                assert sum(abs(a - b) for a, b in zip(s, t)) == 2


@pytest.mark.parametrize("d, cap", [(1, 200), (2, 200), (3, 60)])
def test_schlogl_diffusion_level_neutral(d, cap):
    # exhaustive over all states up to the cap
    _check_level_neutral(d, cap)


@pytest.mark.slow
def test_schlogl_three_sites_level_neutral_to_level_200():
    # 1.37 million states, about a minute
    _check_level_neutral(3, 200)


@pytest.mark.parametrize("d", [2, 3])
def test_schlogl_level_function_drift(d):
    # Omega(level) = sum_u b(i_u) - a(i_u): diffusion adds nothing
    prm = SchloglParams(sites=d)
    m = schlogl(prm)
    for s in enumerate_window(m, 30).states:
        want = sum(prm.birth(k) - prm.death(k) for k in s)
        assert apply_generator(m, lambda x: float(sum(x)), s) == pytest.approx(want)


def test_interleaved_sublattices_do_not_communicate():
    m = build_fixture("interleaved_bounded_quadratic")
    for n in range(200):
        for t, _ in m.transitions_of((n,)):
            assert t[0] % 2 == n % 2


def test_interleaved_transports_rates():
    q1, q2 = build_fixture("bounded_birth_death"), build_fixture("pure_birth_quadratic")
    m = interleaved(q1, q2)
    # even 2k behaves like state k of q2, odd 2k+1 like state k of q1
    assert dict(m.transitions_of((6,))) == {(8,): 16.0}
    assert dict(m.transitions_of((7,))) == {(9,): 1.0, (5,): 1.0}
    assert dict(m.transitions_of((1,))) == {(3,): 1.0}


def test_interleaved_requires_one_dimension():
    with pytest.raises(UsageError):
        interleaved(schlogl(SchloglParams(sites=2)), build_fixture("bounded_birth_death"))


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixtures_are_pure_and_conservative(name):
    m = build_fixture(name)
    for s in enumerate_window(m, 12).states:
        a, b = m.transitions_of(s), m.transitions_of(s)
        assert a == b
        assert all(r > 0 for _, r in a)
        assert apply_generator(m, lambda x: 1.0, s) == 0.0


@pytest.mark.parametrize("name", ["pure_birth_quadratic", "pure_birth_exp2", "pure_birth_loglog",
                                  "birth_death_cubic", "interleaved_bounded_quadratic"])
def test_explosion_time_bounds_are_supersolutions(name):
    # V >= 0 with Omega V <= -1 wherever V is finite
    m = build_fixture(name)
    V = m.explosion_time_bound
    for n in range(0, 400):
        v = V((n,))
        assert v >= 0
        if math.isfinite(v) and m.transitions_of((n,)):
            assert apply_generator(m, V, (n,)) <= -1 + 1e-9 * (1 + abs(v) * m.total_rate((n,)))


@given(st.integers(0, 10 ** 6))
def test_quadratic_tail_matches_partial_sums(n):
    m = build_fixture("pure_birth_quadratic")
    V = m.explosion_time_bound
    # tail(n) - tail(n + 1) = 1/(n+1)^2
    assert V((n,)) - V((n + 1,)) == pytest.approx(1.0 / (n + 1) ** 2, rel=1e-6)


def test_build_fixture_errors():
    with pytest.raises(UsageError, match="unknown zoo model"):
        build_fixture("nope")
    with pytest.raises(UsageError):
        build_fixture("pure_birth_linear", bogus=1)
    assert build_fixture("schlogl", sites=1).dimension == 1

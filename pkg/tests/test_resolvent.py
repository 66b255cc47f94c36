import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qunique.errors import PreconditionError
from qunique.resolvent import (
    decide,
    default_cap_schedule,
    maximal_solution_bracket,
    resolvent_mass,
    uniqueness_verdict_resolvent,
    write_trace_csv,
)
from qunique.verdict import Label, VerdictThresholds

from .conftest import dense_bracket, product_formula

# z(0) for q_n = 2^n at lam = 1: prod_{n >= 0} 1 / (1 + 2^-n), evaluated to
# 30 digits in extended precision; 200 float factors agree to 1e-16.
EXP2_Z0 = 0.2097112208975538


def exp2_z(n, lam=1.0):
    return math.prod(1.0 / (1.0 + lam * 2.0 ** -k) for k in range(n, n + 200))


def test_exp2_product_oracle():
    assert exp2_z(0) == pytest.approx(EXP2_Z0, abs=1e-13)


@pytest.mark.parametrize("N", [10, 100, 1000])
def test_linear_birth_upper_matches_product(zoo, N):
    br = maximal_solution_bracket(zoo("pure_birth_linear"), 1.0, N)
    oracle = product_formula([n + 1 for n in range(N)], 1.0)
    assert oracle == pytest.approx(1.0 / (N + 1), rel=1e-12)
    assert abs(br.at((0,))[1] - 1.0 / (N + 1)) < 1e-10
    assert br.at((0,))[0] == 0.0


def test_exp2_cap_60(zoo):
    br = maximal_solution_bracket(zoo("pure_birth_exp2"), 1.0, 60)
    lo, up = br.at((0,))
    assert up - lo < 1e-8
    assert lo > 0.1
    assert lo <= EXP2_Z0 + 1e-12 <= up + 2e-12
    # golden values, first reproduced by the dense and product oracles below
    assert lo == pytest.approx(0.20971122089742, abs=1e-12)
    assert up == pytest.approx(0.20971122089832, abs=1e-12)


def test_exp2_cap_60_dense_oracle(zoo):
    m = zoo("pure_birth_exp2")
    lo, up = dense_bracket(m, 1.0, 60, tail=lambda k: m.explosion_time_bound((k,)))
    br = maximal_solution_bracket(m, 1.0, 60, method="direct")
    assert np.allclose(br.lower, lo, atol=1e-12) and np.allclose(br.upper, up, atol=1e-12)
    # upper is E exp(-T_60): the first 60 factors of the product
    assert up[0] == pytest.approx(product_formula([2.0 ** k for k in range(60)], 1.0), rel=1e-12)


@pytest.mark.parametrize("name, cap", [("birth_death_cubic", 120), ("bounded_birth_death", 80),
                                       ("birth_death_quartic", 60)])
def test_bracket_matches_dense_oracle(zoo, name, cap):
    m = zoo(name)
    tail = (lambda k: m.explosion_time_bound((k,))) if m.explosion_time_bound else None
    lo, up = dense_bracket(m, 1.0, cap, tail)
    for method in ("direct", "iterate"):
        br = maximal_solution_bracket(m, 1.0, cap, method=method)
        assert np.allclose(br.upper, up, atol=1e-9)
        assert np.allclose(br.lower, lo, atol=1e-9)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_bracket_contains_exact_solution(zoo, lam):
    br = maximal_solution_bracket(zoo("pure_birth_exp2"), lam, 40)
    for n in (0, 5, 20, 35):
        lo, up = br.at((n,))
        z = exp2_z(n, lam)
        assert 0 <= lo <= z + 1e-12 and z <= up + 1e-12 and up <= 1


def test_monotone_iteration(zoo):
    br = maximal_solution_bracket(zoo("birth_death_cubic"), 1.0, 60, keep_trace=True)
    trace = np.array(br.trace)
    assert len(trace) > 5
    assert np.all(np.diff(trace, axis=0) <= 1e-15)
    assert np.all(br.lower <= br.upper)


def test_lower_bracket_monotone_in_cap(zoo):
    m = zoo("pure_birth_quadratic")
    lows = [maximal_solution_bracket(m, 1.0, N, method="direct").at((0,))[0] for N in (10, 20, 40, 80)]
    ups = [maximal_solution_bracket(m, 1.0, N, method="direct").at((0,))[1] for N in (10, 20, 40, 80)]
    assert all(b >= a - 1e-15 for a, b in zip(lows, lows[1:]))
    assert all(b <= a + 1e-15 for a, b in zip(ups, ups[1:]))


def test_nonconvergence_is_flagged_not_raised(zoo):
    m = zoo("bounded_birth_death")
    br = maximal_solution_bracket(m, 1.0, 200, max_iter=5)
    assert not br.converged and br.inconclusive
    exact = maximal_solution_bracket(m, 1.0, 200, method="direct")
    assert np.all(br.upper >= exact.upper - 1e-12)


@pytest.mark.parametrize("lam", [0, -1.0, math.nan])
def test_lambda_must_be_positive(zoo, lam):
    with pytest.raises(PreconditionError):
        maximal_solution_bracket(zoo("pure_birth_linear"), lam, 10)


@pytest.mark.parametrize("name", ["bounded_birth_death", "pure_birth_linear", "pure_birth_exp2",
                                  "pure_birth_quadratic", "birth_death_cubic"])
@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_complement_identity(zoo, name, lam):
    # killed mass on window N plus E exp(-lam T) for the layer of window N+1 is 1
    m = zoo(name)
    N = 30
    mass = resolvent_mass(m, lam, N, n_terms=20_000)
    up = maximal_solution_bracket(m, lam, N + 1, method="direct")
    lo = maximal_solution_bracket(m, lam, N, method="direct")
    k = np.arange(len(mass))
    assert np.all(np.abs(mass + up.upper[k] - 1) < 1e-6)
    assert np.all(mass + lo.lower[k] <= 1 + 1e-6)


def test_complement_identity_two_sites(zoo):
    m = zoo("schlogl", sites=2)
    mass = resolvent_mass(m, 1.0, 15, n_terms=5000)
    up = maximal_solution_bracket(m, 1.0, 16, method="direct")
    assert np.max(np.abs(mass + up.upper[:len(mass)] - 1)) < 1e-6


@given(st.floats(0.1, 10), st.integers(5, 60))
def test_bracket_valid_for_random_lambda(lam, cap):
    from qunique.zoo import build_fixture
    br = maximal_solution_bracket(build_fixture("birth_death_cubic"), lam, cap, method="direct")
    assert np.all(br.lower >= 0) and np.all(br.upper <= 1) and np.all(br.lower <= br.upper)


def test_default_cap_schedule():
    assert default_cap_schedule(1)[:4] == [25, 50, 100, 200]
    caps = default_cap_schedule(2)
    assert caps == [25, 50, 100, 200, 400]


# ---------------------------------------------------------------------------
# verdict rule

T = VerdictThresholds()


def test_decide_nonunique_on_positive_lower():
    assert decide([10, 20], [0.0, 0.2], [0.3, 0.25], T)[0] is Label.NONUNIQUE


def test_decide_unique_when_upper_vanishes():
    assert decide([10, 20, 40], [0, 0, 0], [0.1, 1e-2, 1e-4], T)[0] is Label.UNIQUE


def test_decide_trend_rule():
    caps = [25 * 2 ** k for k in range(7)]
    slow = [1 / math.log(c) ** 3 for c in caps]   # decay rate ~ 1/log cap: slope -1
    level = [0.2 + 1 / c for c in caps]           # levels off at a positive value
    assert decide(caps, [0] * 7, slow, T)[0] is Label.UNIQUE
    assert decide(caps, [0] * 7, level, T)[0] is Label.INCONCLUSIVE
    assert decide(caps[:4], [0] * 4, slow[:4], T)[0] is Label.INCONCLUSIVE


def test_decide_increasing_upper_is_inconclusive():
    assert decide([10, 20], [0, 0], [0.1, 0.2], T)[0] is Label.INCONCLUSIVE


@pytest.mark.parametrize("name, expected", [("pure_birth_linear", Label.UNIQUE),
                                            ("pure_birth_quadratic", Label.NONUNIQUE),
                                            ("bounded_birth_death", Label.UNIQUE)])
def test_verdict_and_trace_csv(zoo, name, expected, tmp_path):
    v = uniqueness_verdict_resolvent(zoo(name), 1.0)
    assert v.label is expected
    rows = v.evidence["trace"]
    assert all(r["lower"] <= r["upper"] for r in rows)
    out = tmp_path / "trace.csv"
    write_trace_csv(out, v)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("lambda,cap,") and len(lines) == len(rows) + 1


def test_verdict_reference_state(zoo):
    v = uniqueness_verdict_resolvent(zoo("interleaved_bounded_quadratic"), 1.0, reference=(2,))
    assert v.label is Label.NONUNIQUE
    v = uniqueness_verdict_resolvent(zoo("interleaved_bounded_quadratic"), 1.0, reference=(1,),
                                     cap_schedule=[25, 50, 100])
    assert v.label is not Label.NONUNIQUE

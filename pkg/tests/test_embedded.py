import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qunique.embedded import (
    build_delta_chain,
    geometric_weights,
    hitting_bracket,
    return_probability_bracket,
    uniqueness_verdict_embedded,
)
from qunique.errors import PreconditionError
from qunique.generator import enumerate_window
from qunique.resolvent import maximal_solution_bracket
from qunique.verdict import Label


@given(st.integers(1, 500), st.floats(0.01, 0.99))
def test_geometric_weights(n, decay):
    w = geometric_weights(n, decay)
    assert w.shape == (n,) and np.all(w > 0)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.diff(w) <= 0)


@pytest.mark.parametrize("decay", [0.0, 1.0, -0.5, 2.0])
def test_decay_must_be_in_open_unit_interval(zoo, decay):
    m = zoo("pure_birth_linear")
    with pytest.raises(PreconditionError):
        build_delta_chain(m, 1.0, enumerate_window(m, 10), weights_decay=decay)


def test_augmented_matrix_is_substochastic(zoo):
    m = zoo("schlogl", sites=2)
    chain = build_delta_chain(m, 1.0, enumerate_window(m, 20))
    A = chain.augmented()
    rows = np.asarray(A.sum(axis=1)).ravel()
    assert np.all(rows <= 1 + 1e-12)
    assert rows[-1] == pytest.approx(1.0)
    inner = chain.base.boundary == 0
    assert np.allclose(rows[:-1][inner], 1.0)


@pytest.mark.parametrize("name", ["pure_birth_exp2", "birth_death_cubic", "bounded_birth_death"])
def test_return_bracket_is_complement_of_resolvent_bracket(zoo, name):
    m = zoo(name)
    w = enumerate_window(m, 50)
    chain = build_delta_chain(m, 1.0, w)
    h_lo, h_up, _, _ = hitting_bracket(chain, method="direct")
    br = maximal_solution_bracket(m, 1.0, 50, method="direct")
    assert np.allclose(h_lo, 1 - br.upper, atol=1e-10)
    assert np.allclose(h_up, 1 - br.lower, atol=1e-10)


def test_return_probability_dense_oracle(zoo):
    # delta returns w.p. sum_j p_j h_j, h = P h + killing on free states
    m = zoo("pure_birth_exp2")
    w = enumerate_window(m, 40)
    chain = build_delta_chain(m, 1.0, w)
    emb = chain.base
    P = emb.interior.toarray()
    free = emb.boundary == 0
    h = np.zeros(len(w))
    h[free] = np.linalg.solve(np.eye(free.sum()) - P[np.ix_(free, free)], emb.killing[free])
    lo, up = return_probability_bracket(chain, method="direct")
    assert lo == pytest.approx(chain.return_dist @ h, abs=1e-12)
    assert lo <= up
    it = return_probability_bracket(chain, level_cap=40)
    assert it.lower == pytest.approx(lo, abs=1e-9) and it.upper == pytest.approx(up, abs=1e-9)


def test_level_cap_mismatch(zoo):
    m = zoo("pure_birth_linear")
    chain = build_delta_chain(m, 1.0, enumerate_window(m, 10))
    with pytest.raises(PreconditionError):
        return_probability_bracket(chain, level_cap=11)


@pytest.mark.parametrize("name", ["bounded_birth_death", "pure_birth_linear", "pure_birth_quadratic",
                                  "pure_birth_exp2", "birth_death_cubic", "interleaved_bounded_quadratic"])
def test_verdict_independent_of_restart_weights(zoo, name):
    labels = {uniqueness_verdict_embedded(zoo(name), 1.0, weights_decay=d).label for d in (0.3, 0.5, 0.9)}
    assert len(labels) == 1
    assert labels.pop().value == {"bounded_birth_death": "unique", "pure_birth_linear": "unique"}.get(
        name, "non-unique")


def test_verdict_evidence(zoo):
    v = uniqueness_verdict_embedded(zoo("pure_birth_quadratic"), 1.0)
    assert v.method == "embedded" and v.label is Label.NONUNIQUE
    assert "non-return" in v.evidence["reason"]
    assert all(r["lower"] <= r["upper"] for r in v.evidence["trace"])

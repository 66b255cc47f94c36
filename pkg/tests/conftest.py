import math
import sys

import numpy as np
import pytest
from hypothesis import settings

from qunique.generator import GeneratorModel, StateVec
from qunique.zoo import build_fixture

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def zoo():
    cache = {}

    def get(name, **params):
        key = (name, tuple(sorted(params.items())))
        if key not in cache:
            cache[key] = build_fixture(name, **params)
        return cache[key]
    return get


def random_walk_2d(rate=1.0):
    """Nearest-neighbour walk on Z_+^2 with level-dependent rates."""
    def transitions(state):
        i, j = state
        out = [(StateVec((i + 1, j)), rate * (1 + i)), (StateVec((i, j + 1)), rate)]
        if i > 0:
            out.append((StateVec((i - 1, j)), rate * i * i))
        if j > 0:
            out.append((StateVec((i, j - 1)), 2 * rate * j))
        return out
    return GeneratorModel(2, transitions, name="walk2d")


def generator_scale(model, fs, state):
    """Size of the terms summed by ``apply_generator`` for each of ``fs``: the natural
    denominator for relative errors, since the sum itself may cancel to near zero."""
    return sum(r * (abs(f(t)) + abs(f(state))) for t, r in model.transitions_of(state) for f in fs)


def product_formula(rates, lam):
    """E exp(-lam T_N) for a pure birth chain started at 0, T_N the hitting time of N."""
    return math.prod(q / (lam + q) for q in rates)


def dense_bracket(model, lam, cap, tail=None):
    """Independent dense oracle for the frozen-layer bracket on {|i| <= cap} (d = 1)."""
    n = cap + 1
    P = np.zeros((n, n))
    frozen = np.zeros(n, dtype=bool)
    for k in range(n):
        trans = model.transitions_of((k,))
        q = sum(r for _, r in trans)
        for t, r in trans:
            if t[0] <= cap:
                P[k, t[0]] = r / (lam + q)
            else:
                frozen[k] = True
    g = np.zeros(n) if tail is None else np.array([math.exp(-lam * tail(k)) for k in range(n)])
    free = ~frozen
    A = np.eye(free.sum()) - P[np.ix_(free, free)]
    up, lo = np.ones(n), g.copy()
    up[free] = np.linalg.solve(A, P[np.ix_(free, frozen)].sum(axis=1))
    lo[free] = np.linalg.solve(A, P[np.ix_(free, frozen)] @ g[frozen])
    return lo, up


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])

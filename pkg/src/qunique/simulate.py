"""Monte Carlo paths of the minimal process and an explosion flag.

Along a path the sum ``sum_n 1/q(X_n)`` over visited states is infinite
almost surely iff the path does not explode. A path that hits the jump cap
with a numerically summable tail of that series is flagged as explosive.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .errors import PreconditionError, RateOverflowError
from .generator import GeneratorModel, StateVec, as_state
from .verdict import Label, MethodVerdict

DEFAULT_EPSILON = 1e-6
DEFAULT_MAX_JUMPS = 100_000
_BLOCK = 1024


class Terminal(str, Enum):
    ABSORBED = "absorbed"
    TIME_CAP = "time-cap"
    JUMP_CAP = "jump-cap"

    def __str__(self) -> str:
        return self.value


@dataclass(eq=False)
class JumpPath:
    """A simulated path: visited states, jump epochs and the inverse-rate series.

    ``inverse_rate_prefix[n]`` is ``sum_{k <= n} 1/q(states[k])``; an
    absorbing final state contributes ``inf``.
    """

    states: list
    jump_times: np.ndarray
    rates: np.ndarray
    terminal: Terminal
    diagnostic: Optional[str] = None
    seed: Optional[tuple] = None

    @property
    def inverse_rate_terms(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.rates

    @property
    def inverse_rate_prefix(self) -> np.ndarray:
        return np.cumsum(self.inverse_rate_terms)

    @property
    def inverse_rate_sum(self) -> float:
        return float(math.fsum(self.inverse_rate_terms))

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    @property
    def elapsed(self) -> float:
        return float(self.jump_times[-1])

    def __len__(self) -> int:
        return len(self.states)


class _Uniforms:
    """Block-buffered uniforms in ``[0, 1)`` from a Philox stream."""

    def __init__(self, seed, trial):
        ss = np.random.SeedSequence([int(seed), int(trial)])
        self._gen = np.random.Generator(np.random.Philox(ss))
        self._buf = np.empty(0)
        self._pos = 0

    def __call__(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BLOCK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


def simulate_path(model: GeneratorModel, initial, seed: int, t_max: float,
                  max_jumps: int = DEFAULT_MAX_JUMPS, trial: int = 0) -> JumpPath:
    """Simulate the minimal process from ``initial`` until absorption or a cap.

    Holding times are exponential (inverse CDF), the next state is drawn with
    probabilities ``q_ij / q_i``. The path is a pure function of
    ``(model, initial, seed, trial, t_max, max_jumps)``.

    A path whose rates overflow, or whose holding times fall below the
    floating-point resolution of the clock, ends as ``JUMP_CAP`` with a
    diagnostic: both only happen on the way to infinity.
    """
    if not t_max > 0:
        raise PreconditionError(f"t_max must be positive, got {t_max}")
    if max_jumps < 1:
        raise PreconditionError(f"max_jumps must be >= 1, got {max_jumps}")
    state = as_state(initial, model.dimension)
    rand = _Uniforms(seed, trial)
    states, times, rates = [], [], []
    t = 0.0
    terminal, diagnostic = None, None
    while True:
        try:
            trans = model.transitions_of(state)
        except RateOverflowError as exc:
            terminal, diagnostic = Terminal.JUMP_CAP, f"rates left the floating-point range: {exc}"
            break
        q = math.fsum(r for _, r in trans)
        if math.isinf(q):
            terminal, diagnostic = Terminal.JUMP_CAP, f"total rate overflows at {tuple(state)}"
            break
        states.append(state)
        times.append(t)
        rates.append(q)
        if q == 0.0:
            terminal = Terminal.ABSORBED
            break
        if len(states) > max_jumps:
            terminal = Terminal.JUMP_CAP
            break
        hold = -math.log1p(-rand()) / q
        if t + hold > t_max:
            terminal = Terminal.TIME_CAP
            break
        if t + hold <= t:
            terminal = Terminal.JUMP_CAP
            diagnostic = "holding times fell below the resolution of the clock"
            break
        t += hold
        target = rand() * q
        acc = 0.0
        nxt = trans[-1][0]
        for s, r in trans:
            acc += r
            if target < acc:
                nxt = s
                break
        state = nxt
    return JumpPath(states, np.asarray(times), np.asarray(rates), terminal, diagnostic, (seed, trial))


def flag_explosive(path: JumpPath, epsilon: float = DEFAULT_EPSILON) -> bool:
    """Jump-capped path whose last half adds less than ``epsilon`` to the series."""
    if path.terminal is not Terminal.JUMP_CAP:
        return False
    terms = path.inverse_rate_terms
    half = len(terms) // 2
    if len(terms) - half < 2:
        return False
    return math.fsum(terms[half:]) < epsilon


@dataclass
class ExplosionEstimate:
    fraction: float
    interval: tuple
    flagged: int
    trials: int
    terminals: dict = field(default_factory=dict)
    epsilon: float = DEFAULT_EPSILON
    diagnostics: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.fraction, self.interval))

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "wilson_95": list(self.interval), "flagged": self.flagged,
                "trials": self.trials, "terminals": dict(self.terminals), "epsilon": self.epsilon,
                "diagnostics": self.diagnostics[:5]}


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_explosion_probability(model: GeneratorModel, initial=None, t_max: float = 5.0,
                                   trials: int = 1000, seed: int = 0,
                                   epsilon: float = DEFAULT_EPSILON,
                                   max_jumps: int = DEFAULT_MAX_JUMPS, workers: int = 1) -> ExplosionEstimate:
    """Fraction of flagged paths among ``trials`` with a 95% Wilson interval.

    Trial ``k`` uses the stream seeded by ``(seed, k)``, so the estimate does
    not depend on ``workers``.
    """
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    initial = initial if initial is not None else (0,) * model.dimension

    def one(k):
        path = simulate_path(model, initial, seed, t_max, max_jumps, trial=k)
        return flag_explosive(path, epsilon), path.terminal, path.diagnostic

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(trials)))
    else:
        outcomes = [one(k) for k in range(trials)]
    flagged = sum(1 for f, _, _ in outcomes if f)
    terminals = {t.value: 0 for t in Terminal}
    for _, term, _ in outcomes:
        terminals[term.value] += 1
    diags = sorted({d for _, _, d in outcomes if d})
    return ExplosionEstimate(flagged / trials, wilson_interval(flagged, trials), flagged, trials,
                             terminals, epsilon, diags)


def uniqueness_verdict_simulation(model: GeneratorModel, initial=None, t_max: float = 1.0,
                                  trials: int = 1000, seed: int = 0, epsilon: float = DEFAULT_EPSILON,
                                  max_jumps: int = DEFAULT_MAX_JUMPS, workers: int = 1) -> MethodVerdict:
    """Read a verdict off the flagged fraction.

    Any flagged path counts as non-uniqueness evidence. Without flags, paths
    that still hit the jump cap leave the question open; if every path ended
    by absorption or at ``t_max`` the result counts as uniqueness evidence.
    """
    est = estimate_explosion_probability(model, initial, t_max, trials, seed, epsilon, max_jumps, workers)
    capped = est.terminals[Terminal.JUMP_CAP.value]
    if est.flagged > 0:
        label, reason = Label.NONUNIQUE, f"{est.flagged} of {trials} paths flagged as explosive"
    elif capped > 0:
        label, reason = Label.INCONCLUSIVE, f"{capped} paths hit the jump cap without a summable tail"
    else:
        label, reason = Label.UNIQUE, f"all {trials} paths stopped at t_max or were absorbed"
    evidence = est.to_dict()
    evidence.update({"t_max": t_max, "max_jumps": max_jumps, "seed": seed, "reason": reason,
                     "rule": "any flagged path counts as non-uniqueness evidence"})
    return MethodVerdict("simulate", label, evidence, {"epsilon": epsilon}, [max_jumps],
                         confidence="low")


def write_path_csv(path_file, path: JumpPath) -> None:
    """Columns: n, tau, one column per coordinate, 1/q term, prefix sum."""
    d = len(path.states[0]) if path.states else 0
    terms = path.inverse_rate_terms
    prefix = np.cumsum(terms)
    with open(path_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "tau"] + [f"x{u}" for u in range(d)] + ["inv_rate", "prefix_sum"])
        for n, s in enumerate(path.states):
            w.writerow([n, repr(float(path.jump_times[n]))] + list(s)
                       + [repr(float(terms[n])), repr(float(prefix[n]))])

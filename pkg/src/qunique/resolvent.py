"""Brackets for the maximal solution of ``(lam I - Q) u = 0, 0 <= u <= 1``.

The maximal solution ``z`` equals ``E_i exp(-lam * explosion time)``; the
process is unique iff ``z == 0``. On a window ``W``:

* the **upper** bound gives value 1 to the outer layer of ``W`` (states
  with a transition leaving ``W``) and solves ``u = Pi u`` on the rest. It
  is the Laplace transform of the hitting time of that layer and decreases
  to ``z`` as the window grows.
* the **lower** bound gives ``exp(-lam V)`` to the outer layer, where ``V``
  is the model's explosion-time bound (``Omega V <= -1``). That function is
  a global subsolution, so the result never exceeds ``z`` and increases with
  the window. Without ``V`` the lower bound is 0.

The complementary quantity ``lam P_min(lam) 1`` (the resolvent mass) is the
partial sum of ``Pi(lam)^n`` applied to the killing column.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import PreconditionError, RateOverflowError, UsageError
from .generator import GeneratorModel, StateVec, as_state, window_size
from .truncation import EmbeddedMatrix, Truncation, iterate_fixed_point, solve_direct
from .verdict import Label, MethodVerdict, VerdictThresholds

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10 ** 6


@dataclass(eq=False)
class SolutionBracket:
    states: tuple
    lower: np.ndarray
    upper: np.ndarray
    iterations: int
    lam: float
    level_cap: Optional[int] = None
    converged: bool = True
    method: str = "iterate"
    trace: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return float(np.max(self.upper - self.lower)) if len(self.states) else 0.0

    @property
    def inconclusive(self) -> bool:
        return not self.converged

    def at(self, state) -> tuple:
        k = self.states.index(as_state(state))
        return float(self.lower[k]), float(self.upper[k])


def default_cap_schedule(dimension: int, max_states: int = 200_000, base: int = 25) -> list:
    """Caps ``25 * 2^k`` whose windows stay under ``max_states`` states."""
    caps = []
    cap = base
    while window_size(cap, dimension) <= max_states:
        caps.append(cap)
        cap *= 2
    return caps or [base]


def state_tail_values(model: GeneratorModel, states, lam: float) -> np.ndarray:
    """``exp(-lam V)`` at ``states`` (zeros when the model carries no ``V``)."""
    bound = model.explosion_time_bound
    if bound is None:
        return np.zeros(len(states))
    return np.array([math.exp(-lam * bound(s)) for s in states])


def bracket_from_embedded(emb: EmbeddedMatrix, model: GeneratorModel, tol: float = DEFAULT_TOL,
                          max_iter: int = DEFAULT_MAX_ITER, method: str = "iterate",
                          keep_trace: bool = False) -> SolutionBracket:
    """Bracket on the window of ``emb``.

    Window states with a transition leaving the window form the frozen
    layer: they take the boundary value directly (1 for the upper problem,
    ``exp(-lam V)`` for the lower one) and the remaining states are solved.
    For level windows the upper value is therefore the Laplace transform of
    the hitting time of the outer layer.
    """
    if not tol > 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if method not in ("iterate", "direct"):
        raise UsageError(f"unknown solver {method!r}; use 'iterate' or 'direct'")
    n = len(emb)
    frozen = emb.boundary > 0
    free = np.flatnonzero(~frozen)
    fixed = np.flatnonzero(frozen)
    g = state_tail_values(model, emb.states, emb.lam)
    P = emb.interior
    P_ff = P[free][:, free]
    P_fa = P[free][:, fixed]
    b_up = np.asarray(P_fa.sum(axis=1)).ravel()
    b_lo = P_fa @ g[fixed]
    upper, lower = np.ones(n), g.copy()
    trace: list = []
    iterations, converged = 0, True
    if method == "direct":
        upper[free] = solve_direct(P_ff, b_up)
        lower[free] = solve_direct(P_ff, b_lo)
    else:
        u, it_up, ok_up = iterate_fixed_point(P_ff, b_up, np.ones(len(free)), tol, max_iter,
                                              trace if keep_trace else None)
        upper[free] = u
        if b_lo.any():
            v, it_lo, ok_lo = iterate_fixed_point(P_ff, b_lo, g[free], tol, max_iter)
        else:
            v, it_lo, ok_lo = np.zeros(len(free)), 0, True
        lower[free] = v
        iterations, converged = max(it_up, it_lo), ok_up and ok_lo
    lower = np.minimum(lower, upper)
    return SolutionBracket(emb.states, lower, upper, iterations, emb.lam, emb.level_cap,
                           converged, method, trace)


def maximal_solution_bracket(model: GeneratorModel, lam: float, level_cap: int, tol: float = DEFAULT_TOL,
                             max_iter: int = DEFAULT_MAX_ITER, method: str = "iterate",
                             keep_trace: bool = False) -> SolutionBracket:
    """Two-sided bracket for ``z_lam`` on ``{i : |i| <= level_cap}``.

    Non-convergence within ``max_iter`` sweeps does not raise: the returned
    bracket has ``converged=False`` and still holds valid (looser) bounds,
    because both iterations are monotone.
    """
    emb = Truncation(model).embedded(level_cap, lam)
    return bracket_from_embedded(emb, model, tol, max_iter, method, keep_trace)


def resolvent_mass(model: GeneratorModel, lam: float, level_cap: int, n_terms: int) -> np.ndarray:
    """Partial series ``sum_{n < n_terms} Pi(lam)^n (lam/(lam+q))`` on the window.

    Transitions leaving the window contribute nothing, so every entry is a
    lower bound for ``lam P_min(lam) 1``.
    """
    if n_terms < 1:
        raise PreconditionError(f"n_terms must be >= 1, got {n_terms}")
    emb = Truncation(model).embedded(level_cap, lam)
    return mass_from_embedded(emb, n_terms)


def mass_from_embedded(emb: EmbeddedMatrix, n_terms: int) -> np.ndarray:
    term = emb.killing.copy()
    total = term.copy()
    for _ in range(1, n_terms):
        term = emb.interior @ term
        if not term.any():
            break
        total += term
    return np.minimum(total, 1.0)


NOISE_FLOOR = 1e-14


def _nonincreasing(values) -> bool:
    # solver noise near zero must not read as growth
    return all(b <= a * (1 + 1e-9) + NOISE_FLOOR for a, b in zip(values, values[1:]))


def _trend_slope(caps, values) -> Optional[float]:
    """Log-log slope of the decay rate of ``values`` against ``log cap``."""
    caps = np.asarray(caps, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0) or np.any(np.diff(v) >= 0) or np.any(caps <= 1):
        return None
    t = np.log(caps)
    rate = -np.diff(np.log(v)) / np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    half = len(rate) // 2
    x, y = np.log(mid[half:]), np.log(rate[half:])
    if len(x) < 2:
        return None
    return float(np.polyfit(x, y, 1)[0])


def decide(caps, lowers, uppers, thresholds: VerdictThresholds) -> tuple:
    """Shared decision rule: returns ``(label, reason)``."""
    if any(lo > thresholds.positive for lo in lowers):
        return Label.NONUNIQUE, "certified lower bound above threshold"
    if not uppers:
        return Label.INCONCLUSIVE, "no caps evaluated"
    if _nonincreasing(uppers) and uppers[-1] < thresholds.zero:
        return Label.UNIQUE, "upper bound below threshold at the largest cap"
    if len(uppers) >= thresholds.min_trend_caps:
        slope = _trend_slope(caps, uppers)
        if slope is not None and slope > thresholds.trend_slope:
            return Label.UNIQUE, f"upper bound decays without levelling off (trend slope {slope:.3f})"
    return Label.INCONCLUSIVE, "bracket does not separate at the evaluated caps"


def uniqueness_verdict_resolvent(model: GeneratorModel, lam: float = 1.0,
                                 cap_schedule: Optional[Sequence[int]] = None,
                                 thresholds: Optional[VerdictThresholds] = None,
                                 reference=None, method: str = "direct",
                                 early_stop: bool = True) -> MethodVerdict:
    """Run brackets along ``cap_schedule`` and read off a verdict at ``reference``.

    With ``early_stop`` the schedule is cut once the answer is settled: at the
    first certified positive lower bound, or once the upper bound has been
    below ``thresholds.zero`` and non-increasing over three caps.
    """
    thresholds = thresholds or VerdictThresholds()
    caps = list(cap_schedule) if cap_schedule is not None else default_cap_schedule(model.dimension)
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise PreconditionError(f"cap_schedule must be strictly increasing, got {caps}")
    ref = as_state(reference if reference is not None else (0,) * model.dimension, model.dimension)
    trunc = Truncation(model)
    rows, lowers, uppers, used = [], [], [], []
    note = None
    for cap in caps:
        if sum(ref) > cap:
            continue
        try:
            emb = trunc.embedded(cap, lam)
        except RateOverflowError as exc:
            note = f"schedule stopped at cap {cap}: {exc}"
            break
        br = bracket_from_embedded(emb, model, method=method)
        k = trunc.index[ref]
        lo, up = float(br.lower[k]), float(br.upper[k])
        rows.append({"cap": cap, "states": len(emb), "iterations": br.iterations, "lower": lo,
                     "upper": up, "gap": up - lo, "converged": br.converged})
        lowers.append(lo)
        uppers.append(up)
        used.append(cap)
        if early_stop and lo > thresholds.positive:
            break
        if (early_stop and len(uppers) >= 3 and uppers[-1] < thresholds.zero
                and _nonincreasing(uppers[-3:])):
            break
    label, reason = decide(used, lowers, uppers, thresholds)
    evidence = {"reference": list(ref), "lambda": lam, "reason": reason, "trace": rows,
                "tail_bound": model.explosion_time_bound is not None}
    if note:
        evidence["note"] = note
    return MethodVerdict("resolvent", label, evidence, thresholds.to_dict(), used)


def write_trace_csv(path, verdict: MethodVerdict) -> None:
    """Write the per-cap bracket trace of a verdict as CSV, one row per (lambda, cap)."""
    parts = verdict.evidence.get("per_lambda", [verdict.evidence])
    rows = [dict(row, **{"lambda": part.get("lambda")}) for part in parts for row in part.get("trace", [])]
    fields = ["lambda", "cap", "states", "iterations", "lower", "upper", "gap", "converged"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

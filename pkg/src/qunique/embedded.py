"""The embedded chain augmented with a cemetery-and-restart state ``delta``.

Killing mass ``lam/(lam+q_i)`` is redirected to ``delta`` and ``delta``
restarts the chain in ``j`` with probability ``p_j``. The process is unique
iff this chain is recurrent, i.e. iff it returns to ``delta`` with
probability one. From state ``i`` the return probability ``h_i`` solves
``h = Pi h + killing``; its complement is the maximal solution ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError, RateOverflowError, UsageError
from .generator import GeneratorModel, Window, as_state
from .resolvent import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    decide,
    default_cap_schedule,
    state_tail_values,
)
from .truncation import EmbeddedMatrix, Truncation, build_embedded, iterate_fixed_point, solve_direct
from .verdict import Label, MethodVerdict, VerdictThresholds

DEFAULT_DECAY = 0.5


@dataclass(frozen=True, eq=False)
class DeltaChain:
    """``Pi(lam)`` on a window plus the restart distribution of ``delta``.

    ``tail`` holds ``exp(-lam V)`` per window state; it is a lower bound on
    the probability of never returning, used for the outer layer of the
    window in the upper return bracket.
    """

    base: EmbeddedMatrix
    return_dist: np.ndarray
    weights_decay: float
    tail: np.ndarray

    @property
    def level_cap(self):
        return self.base.level_cap

    def augmented(self) -> sp.csr_matrix:
        """The matrix of the augmented chain with ``delta`` as the last index."""
        n = len(self.base)
        P = self.base.interior.tocoo()
        rows = np.concatenate([P.row, np.arange(n), np.full(n, n)])
        cols = np.concatenate([P.col, np.full(n, n), np.arange(n)])
        vals = np.concatenate([P.data, self.base.killing, self.return_dist])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))


def geometric_weights(n: int, decay: float) -> np.ndarray:
    """``decay^rank`` over ``n`` ranks, normalized to a probability vector."""
    if not 0.0 < decay < 1.0:
        raise PreconditionError(f"weights_decay must lie in (0, 1), got {decay}")
    w = decay ** np.arange(n, dtype=float)
    # deep ranks underflow to 0; keep them strictly positive
    w = np.maximum(w, np.finfo(float).tiny)
    return w / w.sum()


def delta_chain_from_embedded(emb: EmbeddedMatrix, model: GeneratorModel,
                              weights_decay: float = DEFAULT_DECAY) -> DeltaChain:
    p = geometric_weights(len(emb), weights_decay)
    return DeltaChain(emb, p, weights_decay, state_tail_values(model, emb.states, emb.lam))


def build_delta_chain(model: GeneratorModel, lam: float, window: Window,
                      weights_decay: float = DEFAULT_DECAY) -> DeltaChain:
    """Augmented chain on ``window``; ``p_j`` decays geometrically in state order."""
    if not 0.0 < weights_decay < 1.0:
        raise PreconditionError(f"weights_decay must lie in (0, 1), got {weights_decay}")
    return delta_chain_from_embedded(build_embedded(model, lam, window), model, weights_decay)


@dataclass(frozen=True)
class ReturnBracket:
    lower: float
    upper: float
    converged: bool = True
    iterations: int = 0

    def __iter__(self):
        return iter((self.lower, self.upper))


def hitting_bracket(chain: DeltaChain, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    method: str = "iterate"):
    """Per-state bounds ``(h_lower, h_upper, iterations, converged)`` on the return probability.

    The outer layer of the window (states with transitions leaving it) is
    assigned 0 for the lower problem and ``1 - exp(-lam V)`` for the upper.
    """
    if not tol > 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if method not in ("iterate", "direct"):
        raise UsageError(f"unknown solver {method!r}; use 'iterate' or 'direct'")
    emb = chain.base
    n = len(emb)
    frozen = emb.boundary > 0
    free = np.flatnonzero(~frozen)
    fixed = np.flatnonzero(frozen)
    P = emb.interior
    P_ff = P[free][:, free]
    P_fa = P[free][:, fixed]
    kill = emb.killing[free]
    b_lo = kill
    b_up = kill + P_fa @ (1.0 - chain.tail[fixed])
    h_lo, h_up = np.zeros(n), 1.0 - chain.tail
    if method == "direct":
        h_lo[free] = solve_direct(P_ff, b_lo)
        h_up[free] = solve_direct(P_ff, b_up)
        return h_lo, np.maximum(h_up, h_lo), 0, True
    lo, it_lo, ok_lo = iterate_fixed_point(P_ff, b_lo, np.zeros(len(free)), tol, max_iter)
    up, it_up, ok_up = iterate_fixed_point(P_ff, b_up, np.ones(len(free)), tol, max_iter)
    h_lo[free], h_up[free] = lo, up
    return h_lo, np.maximum(h_up, h_lo), max(it_lo, it_up), ok_lo and ok_up


def return_probability_bracket(chain: DeltaChain, level_cap: Optional[int] = None,
                               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                               method: str = "iterate") -> ReturnBracket:
    """Bracket the probability that the chain started at ``delta`` returns to it.

    Unpacks as ``(lower, upper)``. ``level_cap`` is only a consistency check
    against the chain's own window.
    """
    if level_cap is not None and chain.level_cap is not None and level_cap != chain.level_cap:
        raise PreconditionError(
            f"chain was built on level_cap={chain.level_cap}, got level_cap={level_cap}")
    h_lo, h_up, iterations, ok = hitting_bracket(chain, tol, max_iter, method)
    p = chain.return_dist
    lower = float(np.clip(p @ h_lo, 0.0, 1.0))
    upper = float(np.clip(p @ h_up, lower, 1.0))
    return ReturnBracket(lower, upper, ok, iterations)


def uniqueness_verdict_embedded(model: GeneratorModel, lam: float = 1.0,
                                cap_schedule: Optional[Sequence[int]] = None,
                                thresholds: Optional[VerdictThresholds] = None,
                                weights_decay: float = DEFAULT_DECAY, method: str = "direct",
                                early_stop: bool = True) -> MethodVerdict:
    """Verdict from the return-probability bracket along ``cap_schedule``.

    The non-return probability ``1 - return`` is read with the same rule as
    the resolvent verdict: an upper return bound below ``1 - positive`` means
    non-uniqueness, and a lower return bound approaching 1 (below ``zero``
    away from 1, or decaying without levelling off) is uniqueness evidence.
    """
    thresholds = thresholds or VerdictThresholds()
    caps = list(cap_schedule) if cap_schedule is not None else default_cap_schedule(model.dimension)
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise PreconditionError(f"cap_schedule must be strictly increasing, got {caps}")
    if not 0.0 < weights_decay < 1.0:
        raise PreconditionError(f"weights_decay must lie in (0, 1), got {weights_decay}")
    trunc = Truncation(model)
    rows, miss_lo, miss_up, used = [], [], [], []
    note = None
    for cap in caps:
        try:
            emb = trunc.embedded(cap, lam)
        except RateOverflowError as exc:
            note = f"schedule stopped at cap {cap}: {exc}"
            break
        chain = delta_chain_from_embedded(emb, model, weights_decay)
        br = return_probability_bracket(chain, method=method)
        rows.append({"cap": cap, "states": len(emb), "iterations": br.iterations,
                     "lower": br.lower, "upper": br.upper, "gap": br.upper - br.lower,
                     "converged": br.converged})
        miss_lo.append(1.0 - br.upper)
        miss_up.append(1.0 - br.lower)
        used.append(cap)
        label, _ = decide(used, miss_lo, miss_up, thresholds)
        if early_stop and label is Label.NONUNIQUE:
            break
        if early_stop and len(used) >= 3 and label is Label.UNIQUE and miss_up[-1] < thresholds.zero:
            break
    label, reason = decide(used, miss_lo, miss_up, thresholds)
    evidence = {"lambda": lam, "weights_decay": weights_decay, "reason": reason.replace(
        " bound", " non-return bound"), "trace": rows}
    if note:
        evidence["note"] = note
    return MethodVerdict("embedded", label, evidence, thresholds.to_dict(), used)

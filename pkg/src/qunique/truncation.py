"""Embedded substochastic matrices ``Pi(lam)`` restricted to finite windows.

Row ``i`` of ``Pi(lam)`` sends mass ``q_ij/(lam+q_i)`` to ``j`` and loses
``lam/(lam+q_i)`` (the killing mass). On a window the row splits into an
interior part (kept as a sparse matrix), a boundary part (mass leaving the
window) and the killing part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PreconditionError, RateOverflowError, ResourceError
from .generator import (
    DEFAULT_MAX_WINDOW_STATES,
    GeneratorModel,
    StateVec,
    Window,
    states_at_level,
    window_size,
)


@dataclass(frozen=True, eq=False)
class EmbeddedMatrix:
    states: tuple
    lam: float
    interior: sp.csr_matrix
    boundary: np.ndarray
    killing: np.ndarray
    exterior_rows: np.ndarray
    exterior_targets: tuple
    exterior_probs: np.ndarray
    level_cap: Optional[int] = None

    def __len__(self) -> int:
        return len(self.states)

    @property
    def interior_mass(self) -> np.ndarray:
        return np.asarray(self.interior.sum(axis=1)).ravel()

    def exterior_values(self, values) -> np.ndarray:
        """``sum_j Pi_ij v(j)`` over exterior targets, per window row."""
        vals = np.asarray(values, dtype=float)
        return np.bincount(self.exterior_rows, weights=self.exterior_probs * vals,
                           minlength=len(self.states))

    def tail_subsolution(self, model: GeneratorModel) -> Optional[np.ndarray]:
        """``exp(-lam V)`` at each exterior target, or ``None`` without ``V``."""
        bound = model.explosion_time_bound
        if bound is None:
            return None
        return np.array([math.exp(-self.lam * bound(t)) for t in self.exterior_targets])


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise PreconditionError(f"lambda must be a positive finite number, got {lam}")
    return lam


def _assemble(states, q, src, tgt_idx, rates, ext_targets, lam, level_cap=None) -> EmbeddedMatrix:
    n = len(states)
    denom = lam + q
    prob = rates / denom[src]
    inside = tgt_idx >= 0
    interior = sp.csr_matrix((prob[inside], (src[inside], tgt_idx[inside])), shape=(n, n))
    ext_rows = src[~inside]
    ext_probs = prob[~inside]
    boundary = np.bincount(ext_rows, weights=ext_probs, minlength=n)
    return EmbeddedMatrix(
        states=tuple(states), lam=lam, interior=interior, boundary=boundary,
        killing=lam / denom, exterior_rows=ext_rows, exterior_targets=tuple(ext_targets),
        exterior_probs=ext_probs, level_cap=level_cap)


def build_embedded(model: GeneratorModel, lam: float, window: Window) -> EmbeddedMatrix:
    """``Pi(lam)`` on an explicit window."""
    lam = _check_lambda(lam)
    index = window.index
    q = np.zeros(len(window.states))
    src, tgt, rates, ext = [], [], [], []
    for k, s in enumerate(window.states):
        total = 0.0
        for t, r in model.transitions_of(s):
            total += r
            src.append(k)
            j = index.get(t, -1)
            tgt.append(j)
            rates.append(r)
            if j < 0:
                ext.append(t)
        if not math.isfinite(total):
            raise RateOverflowError(f"{model.name}: total rate overflows at state {tuple(s)}")
        q[k] = total
    return _assemble(window.states, q, np.asarray(src, dtype=np.int64), np.asarray(tgt, dtype=np.int64),
                     np.asarray(rates, dtype=float), ext, lam, window.level_cap)


class Truncation:
    """Level windows of one model, enumerated once and grown on demand.

    States are kept in graded order, so the window of cap ``N`` is a prefix
    of every larger window and rows never need recomputing. Instances are
    per-call scratch space, not shared caches.
    """

    def __init__(self, model: GeneratorModel, max_states: int = DEFAULT_MAX_WINDOW_STATES):
        self.model = model
        self.max_states = max_states
        self.states: list = []
        self.index: dict = {}
        self.q: list = []
        self.level_end: list = []
        self.edge_end: list = []
        self._src: list = []
        self._tgt: list = []
        self._tgt_level: list = []
        self._rate: list = []
        self._tgt_idx: list = []
        self._unresolved: list = []

    @property
    def cap(self) -> int:
        return len(self.level_end) - 1

    def size(self, cap: int) -> int:
        return self.level_end[cap]

    def extend(self, cap: int) -> None:
        d = self.model.dimension
        if window_size(cap, d) > self.max_states:
            raise ResourceError(
                f"window with level_cap={cap} has {window_size(cap, d)} states "
                f"(limit {self.max_states}); use a smaller cap")
        for level in range(self.cap + 1, cap + 1):
            for s in states_at_level(level, d):
                k = len(self.states)
                self.states.append(s)
                self.index[s] = k
                total = 0.0
                for t, r in self.model.transitions_of(s):
                    total += r
                    self._src.append(k)
                    self._tgt.append(t)
                    self._tgt_level.append(sum(t))
                    self._rate.append(r)
                    self._tgt_idx.append(-1)
                    self._unresolved.append(len(self._src) - 1)
                if not math.isfinite(total):
                    raise RateOverflowError(f"{self.model.name}: total rate overflows at {tuple(s)}")
                self.q.append(total)
            self.level_end.append(len(self.states))
            self.edge_end.append(len(self._src))
        pending = []
        for e in self._unresolved:
            if self._tgt_level[e] <= self.cap:
                self._tgt_idx[e] = self.index[self._tgt[e]]
            else:
                pending.append(e)
        self._unresolved = pending

    def window(self, cap: int) -> Window:
        self.extend(cap)
        n, m = self.level_end[cap], self.edge_end[cap]
        boundary = {self._tgt[e] for e in range(m) if self._tgt_level[e] > cap}
        return Window(tuple(self.states[:n]), tuple(sorted(boundary, key=lambda s: (sum(s), s))), cap)

    def embedded(self, cap: int, lam: float) -> EmbeddedMatrix:
        lam = _check_lambda(lam)
        self.extend(cap)
        n, m = self.level_end[cap], self.edge_end[cap]
        src = np.asarray(self._src[:m], dtype=np.int64)
        tgt_level = np.asarray(self._tgt_level[:m], dtype=np.int64)
        tgt_idx = np.asarray(self._tgt_idx[:m], dtype=np.int64)
        tgt_idx[tgt_level > cap] = -1
        ext = [self._tgt[e] for e in np.flatnonzero(tgt_level > cap)]
        return _assemble(self.states[:n], np.asarray(self.q[:n]), src, tgt_idx,
                         np.asarray(self._rate[:m], dtype=float), ext, lam, cap)


# ---------------------------------------------------------------------------
# linear solves for u = P u + b

def solve_direct(P: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    if n == 0:
        return np.zeros(0)
    if not np.any(b):
        return np.zeros(n)
    A = (sp.identity(n, format="csc") - P.tocsc())
    x = spla.spsolve(A, b)
    return np.clip(np.atleast_1d(x), 0.0, 1.0)


def solve_dense(P, b) -> np.ndarray:
    """Dense reference solve; only meant for small windows in tests."""
    dense = P.toarray() if sp.issparse(P) else np.asarray(P)
    n = dense.shape[0]
    if n > 2000:
        raise ResourceError(f"dense solve limited to 2000 states, got {n}")
    return np.linalg.solve(np.eye(n) - dense, b)


def iterate_fixed_point(P, b, u0, tol: float, max_iter: int, record=None):
    """Jacobi sweeps ``u <- P u + b`` from ``u0``.

    Returns ``(u, sweeps, converged)``. ``record`` (a list) collects every
    iterate when given.
    """
    u = np.array(u0, dtype=float)
    for sweep in range(1, max_iter + 1):
        nxt = P @ u + b
        change = float(np.max(np.abs(nxt - u))) if len(u) else 0.0
        u = nxt
        if record is not None:
            record.append(u.copy())
        if change < tol:
            return u, sweep, True
    return u, max_iter, False

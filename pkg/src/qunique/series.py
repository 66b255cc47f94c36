"""Divergence test for ``sum 1/q_n`` of a pure birth process.

A pure birth process is unique iff ``sum_n 1/q_{n,n+1}`` diverges. The
classifier looks at the tail of the terms on ``[n_max/2, n_max]``:

1. fit ``log t_n = a + s log n``. Clearly flatter than ``1/n`` diverges,
   clearly steeper converges.
2. in the band around ``s = -1`` fit ``log t_n + log n = a - beta log log n``
   and compare ``beta`` with 1 (``1/(n log^beta n)`` converges iff beta > 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .errors import PreconditionError, RateOverflowError
from .verdict import Label, MethodVerdict


class SeriesClass(str, Enum):
    DIVERGES = "diverges"
    CONVERGES = "converges"
    INCONCLUSIVE = "inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SeriesMargins:
    """Decision margins for :func:`classify_series`.

    ``converge`` is wider than ``diverge`` because terms like ``1/(n log n)``
    still have a local log-log slope near ``-1.09`` at ``n = 10^5``; such
    slopes go to a secondary fit of the log-correction exponent ``b`` in
    ``t_n ~ 1/(n log^b n)``: ``b <= 1 + beta`` reads as divergence and
    ``b > 1 + beta_converge`` (beyond its confidence halfwidth) as convergence.
    """

    diverge: float = 0.05
    converge: float = 0.25
    beta: float = 0.1
    beta_converge: float = 0.5
    confidence: float = 0.95


@dataclass(frozen=True)
class SeriesResult:
    verdict: SeriesClass
    slope: float
    slope_halfwidth: float
    beta: Optional[float]
    beta_halfwidth: Optional[float]
    partial_sum: float
    n_max: int

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "slope": self.slope,
                "slope_halfwidth": self.slope_halfwidth, "beta": self.beta,
                "beta_halfwidth": self.beta_halfwidth, "partial_sum": self.partial_sum,
                "n_max": self.n_max}


def _fit(x, y, confidence):
    res = stats.linregress(x, y)
    tq = stats.t.ppf(0.5 + confidence / 2, len(x) - 2)
    return float(res.slope), float(tq * res.stderr)


def _evaluate(terms, n_max):
    vals = np.empty(n_max)
    for n in range(1, n_max + 1):
        t = float(terms(n))
        if not t > 0 or not math.isfinite(t):
            raise PreconditionError(f"series term at n={n} must be positive and finite, got {t}")
        vals[n - 1] = t
    return vals


def classify_series(terms: Callable[[int], float], n_max: int = 10 ** 5,
                    margins: Optional[SeriesMargins] = None) -> SeriesResult:
    """Classify ``sum_{n >= 1} terms(n)`` as divergent, convergent or undecided.

    Parameters
    ----------
    terms : callable
        ``terms(n) > 0`` for ``1 <= n <= n_max``.
    n_max : int
        Last index evaluated, at least 1000.
    margins : SeriesMargins, optional
        Decision margins.

    Returns
    -------
    SeriesResult
        Verdict plus the fitted slope, ``beta`` and the partial sum.
    """
    if n_max < 1000:
        raise PreconditionError(f"n_max must be at least 1000, got {n_max}")
    m = margins or SeriesMargins()
    vals = _evaluate(terms, n_max)
    partial = math.fsum(vals)
    lo = n_max // 2
    n = np.arange(lo, n_max + 1, dtype=float)
    logt = np.log(vals[lo - 1:])
    logn = np.log(n)
    s, h = _fit(logn, logt, m.confidence)
    beta = hb = None
    if s - h > -(1 - m.diverge):
        verdict = SeriesClass.DIVERGES
    elif s + h < -(1 + m.converge):
        verdict = SeriesClass.CONVERGES
    else:
        slope_b, hb = _fit(np.log(logn), logt + logn, m.confidence)
        beta = -slope_b
        if beta <= 1 + m.beta:
            verdict = SeriesClass.DIVERGES
        elif beta - hb > 1 + m.beta_converge:
            verdict = SeriesClass.CONVERGES
        else:
            verdict = SeriesClass.INCONCLUSIVE
    return SeriesResult(verdict, s, h, beta, hb, partial, n_max)


def _representable_range(rate_fn, n_max):
    # first index whose rate overflows or whose reciprocal underflows
    for n in range(1, n_max + 1):
        try:
            r = float(rate_fn(n))
        except (OverflowError, RateOverflowError):
            return n - 1
        if math.isinf(r) or (r > 0 and 1.0 / r == 0.0):
            return n - 1
    return n_max


def pure_birth_verdict(rate_fn: Callable[[int], float], n_max: int = 10 ** 5,
                       margins: Optional[SeriesMargins] = None) -> MethodVerdict:
    """Uniqueness verdict for the pure birth process with rates ``rate_fn``.

    Rates that leave the floating-point range before ``n_max`` shorten the
    fitted range to the representable prefix (recorded in the evidence).
    """
    usable = _representable_range(rate_fn, n_max)
    note = None
    if usable < n_max:
        note = f"rates leave the floating-point range after n={usable}; fitted up to there"
        if usable < 1000:
            return MethodVerdict("pure-birth-series", Label.INCONCLUSIVE, {"note": note}, {}, [usable])
        n_max = usable
    res = classify_series(lambda n: 1.0 / rate_fn(n), n_max, margins)
    label = {SeriesClass.DIVERGES: Label.UNIQUE, SeriesClass.CONVERGES: Label.NONUNIQUE,
             SeriesClass.INCONCLUSIVE: Label.INCONCLUSIVE}[res.verdict]
    m = margins or SeriesMargins()
    evidence = res.to_dict()
    if note:
        evidence["note"] = note
    return MethodVerdict("pure-birth-series", label, evidence,
                         {"diverge_margin": m.diverge, "converge_margin": m.converge,
                          "beta_margin": m.beta, "beta_converge_margin": m.beta_converge}, [n_max])

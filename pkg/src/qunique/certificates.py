"""Windowed checks of Lyapunov-type certificates.

Three certificate shapes are supported:

``uniqueness``
    ``phi >= 0``, ``Omega phi <= c phi`` and ``phi`` growing off an
    exhausting family of windows.
``corollary``
    ``phi >= q`` and ``Omega phi <= c phi``; no growth condition needed.
``nonuniqueness``
    a bounded ``phi`` with positive supremum and ``Omega phi >= c phi`` for
    some ``c > 0``.

Every check runs on a finite window and reports *evidence*
(``supported``/``violated``/``inconclusive``), never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dsl import compile_state_function, parse_certificate
from .errors import EvaluationError, PreconditionError, UsageError
from .generator import GeneratorModel, StateVec, enumerate_window

# last shell increment must keep at least this share of the first one
GROWTH_RATIO = 0.5
TOL_REL = 1e-9
# phi differences lose about this much relative accuracy to cancellation
_ROUNDING = 8 * np.finfo(float).eps


class CertificateKind(str, Enum):
    UNIQUENESS = "uniqueness"
    COROLLARY = "corollary"
    NONUNIQUENESS = "nonuniqueness"

    def __str__(self) -> str:
        return self.value


class Support(str, Enum):
    SUPPORTED = "supported"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LyapunovCertificate:
    """Candidate test function with its drift constant and window family.

    Parameters
    ----------
    phi : callable
        ``phi(state) -> float``.
    c : float
        Drift constant.
    window_family : sequence of int
        Strictly increasing level caps standing in for ``E_n``. Empty means
        "pick a family inside the checked window".
    kind : CertificateKind
    bound : float, optional
        Declared ``sup phi`` (required for non-uniqueness certificates).
    bounded_rates : float, optional
        Declares ``E_n = E`` for every ``n`` with ``sup q <= bounded_rates``;
        the growth condition is then vacuous.
    infinite_part : callable, optional
        Predicate selecting states that belong to every ``E_n`` (an infinite
        set on which rates are declared bounded by ``bounded_rates``).
    """

    phi: Callable
    c: float
    window_family: tuple = ()
    kind: CertificateKind = CertificateKind.UNIQUENESS
    bound: Optional[float] = None
    bounded_rates: Optional[float] = None
    infinite_part: Optional[Callable] = None
    name: str = "certificate"

    def __post_init__(self):
        object.__setattr__(self, "kind", CertificateKind(self.kind))
        fam = tuple(int(k) for k in self.window_family)
        if any(b <= a for a, b in zip(fam, fam[1:])):
            raise PreconditionError(f"window_family must be strictly increasing, got {fam}")
        if any(k < 0 for k in fam):
            raise PreconditionError("window caps must be nonnegative")
        object.__setattr__(self, "window_family", fam)
        if self.kind is CertificateKind.NONUNIQUENESS:
            if self.bound is None or not math.isfinite(self.bound):
                raise PreconditionError("a non-uniqueness certificate needs a finite declared bound")
        if self.infinite_part is not None and self.bounded_rates is None:
            raise PreconditionError("an infinite window part needs a bounded_rates declaration")

    @property
    def expression(self) -> str:
        return getattr(self.phi, "expression", getattr(self.phi, "__name__", "phi"))


@dataclass(frozen=True)
class Violation:
    state: tuple
    lhs: float
    rhs: float
    condition: str

    def to_dict(self) -> dict:
        return {"state": list(self.state), "lhs": self.lhs, "rhs": self.rhs, "condition": self.condition}


@dataclass
class CertificateReport:
    verdict: Support
    kind: CertificateKind
    c: float
    violations: list = field(default_factory=list)
    growth_trace: list = field(default_factory=list)
    window_family: list = field(default_factory=list)
    checked_states: int = 0
    level_cap: int = 0
    notes: list = field(default_factory=list)
    declarations: dict = field(default_factory=dict)
    unresolved: int = 0
    unresolved_from_level: Optional[int] = None

    @property
    def supported(self) -> bool:
        return self.verdict is Support.SUPPORTED

    def to_dict(self, max_violations: int = 20) -> dict:
        return {
            "verdict": self.verdict.value,
            "kind": self.kind.value,
            "c": self.c,
            "violation_count": len(self.violations),
            "violations": [v.to_dict() for v in self.violations[:max_violations]],
            "growth_trace": list(self.growth_trace),
            "window_family": list(self.window_family),
            "checked_states": self.checked_states,
            "level_cap": self.level_cap,
            "notes": list(self.notes),
            "declarations": dict(self.declarations),
            "unresolved": self.unresolved,
        }


# ---------------------------------------------------------------------------
# shared evaluation

@dataclass
class _WindowData:
    states: tuple
    levels: np.ndarray
    phi: np.ndarray
    drift: np.ndarray
    q: np.ndarray
    err: np.ndarray  # rounding bound on drift


def _evaluate(model: GeneratorModel, phi, level_cap: int, nonnegative: bool) -> _WindowData:
    if level_cap < 0:
        raise PreconditionError(f"level_cap must be nonnegative, got {level_cap}")
    states = enumerate_window(model, level_cap).states
    memo: dict = {}

    def f(s):
        v = memo.get(s)
        if v is None:
            v = float(phi(s))
            if not math.isfinite(v):
                raise EvaluationError(f"phi is not finite at state {tuple(s)}: {v}")
            memo[s] = v
        return v

    n = len(states)
    vals, drift, q, err = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    for k, s in enumerate(states):
        v = f(s)
        if nonnegative and v < 0:
            raise PreconditionError(f"phi must be nonnegative; phi{tuple(s)} = {v}")
        total = acc = scale = 0.0
        for t, r in model.transitions_of(s):
            ft = f(t)
            total += r
            acc += r * (ft - v)
            scale += r * (abs(ft) + abs(v))
        vals[k], drift[k], q[k], err[k] = v, acc, total, _ROUNDING * scale
    levels = np.fromiter((s.level for s in states), dtype=np.int64, count=n)
    return _WindowData(states, levels, vals, drift, q, err)


def _tol(c, phi):
    return TOL_REL * (1.0 + np.abs(c * phi))


def _collect(data, mask, lhs, rhs, condition) -> list:
    return [Violation(tuple(data.states[k]), float(lhs[k]), float(rhs[k]), condition)
            for k in np.flatnonzero(mask)]


def _drift_check(data, excess, report, violations, lhs, rhs):
    """Split states with ``excess > tol`` into violations and unresolved ones.

    A state is unresolved when the excess is within the rounding bound of
    ``Omega phi``: the sign of the inequality cannot be read off in floating
    point there.
    """
    bad = excess > _tol(report.c, data.phi)
    real = bad & (excess > data.err)
    violations += _collect(data, real, lhs, rhs, "drift")
    unresolved = np.flatnonzero(bad & ~real)
    report.unresolved = len(unresolved)
    if len(unresolved):
        first = int(data.levels[unresolved].min())
        report.unresolved_from_level = first
        return (f"drift inequality not resolvable in floating point at {len(unresolved)} states "
                f"(from level {first})")
    return None


def _default_family(level_cap: int) -> tuple:
    fam = sorted({level_cap // 8, level_cap // 4, level_cap // 2, level_cap} - {0})
    return tuple(fam) or (level_cap,)


def _finish(violations, inconclusive_reason, report: CertificateReport) -> CertificateReport:
    violations.sort(key=lambda v: (sum(v.state), v.state, v.condition))
    report.violations = violations
    if violations:
        report.verdict = Support.VIOLATED
    elif inconclusive_reason:
        report.verdict = Support.INCONCLUSIVE
        report.notes.append(inconclusive_reason)
    else:
        report.verdict = Support.SUPPORTED
    report.notes.append("finite-window evidence, not a proof")
    return report


# ---------------------------------------------------------------------------
# checks

def _growth_reason(data, family, infinite, report) -> Optional[str]:
    """Why the shell minima of ``phi`` do not look unbounded, or ``None``.

    With ``m_k`` the minimum of ``phi`` on shell ``k`` and ``S`` the spread
    of ``phi`` over the innermost window, require ``m`` non-decreasing,
    ``m_K - max(inner) > S`` and a last increment of at least
    ``GROWTH_RATIO`` times the first. Only differences of ``phi`` enter, so
    the outcome is unchanged under ``phi -> a*phi + b`` with ``a > 0``.
    """
    finite = ~infinite
    inner = (data.levels <= family[0]) & finite
    trace = []
    for cap in family:
        shell = (data.levels == cap) & finite
        trace.append(float(data.phi[shell].min()) if shell.any() else math.inf)
    report.growth_trace = trace
    if not inner.any() or not np.all(np.isfinite(trace)):
        return "some window shell has no states to read the growth of phi from"
    top = float(data.phi[inner].max())
    spread = top - float(data.phi[finite].min())
    report.declarations["growth_margin"] = spread
    if any(b < a for a, b in zip(trace, trace[1:])):
        return "phi on the window shells is not non-decreasing"
    if not trace[-1] - top > spread:
        return (f"phi on the outermost shell rises {trace[-1] - top:.6g} above the innermost window, "
                f"not more than its spread {spread:.6g}")
    if len(trace) >= 3 and trace[-1] - trace[-2] < GROWTH_RATIO * (trace[1] - trace[0]):
        return "growth of phi across the window shells is levelling off"
    return None


def check_uniqueness_certificate(model: GeneratorModel, cert: LyapunovCertificate,
                                 level_cap: int) -> CertificateReport:
    """Check ``Omega phi <= c phi`` pointwise and the growth of ``phi`` on shells.

    The growth condition is read on the shells ``{level = cap_k}`` of the
    window family, see :func:`_growth_reason`. A failed growth check makes
    the report inconclusive rather than violated.
    """
    if cert.kind is not CertificateKind.UNIQUENESS:
        raise PreconditionError(f"expected a uniqueness certificate, got {cert.kind.value}")
    family = cert.window_family or _default_family(level_cap)
    if family[-1] > level_cap:
        raise PreconditionError(f"window family reaches {family[-1]} beyond level_cap={level_cap}")
    data = _evaluate(model, cert.phi, level_cap, nonnegative=True)
    rhs = cert.c * data.phi
    report = CertificateReport(Support.INCONCLUSIVE, cert.kind, cert.c, window_family=list(family),
                               checked_states=len(data.states), level_cap=level_cap)
    violations: list = []
    reason = _drift_check(data, data.drift - rhs, report, violations, data.drift, rhs)
    infinite = np.zeros(len(data.states), dtype=bool)
    if cert.infinite_part is not None:
        infinite = np.fromiter((bool(cert.infinite_part(s)) for s in data.states), dtype=bool,
                               count=len(data.states))
        report.declarations["infinite_part"] = int(infinite.sum())
        report.notes.append("part of every window is declared infinite; its rate bound is trusted "
                            "beyond the checked states")
    if cert.bounded_rates is not None:
        scope = infinite if cert.infinite_part is not None else np.ones(len(data.states), dtype=bool)
        bound = cert.bounded_rates
        report.declarations["bounded_rates"] = bound
        over = scope & (data.q > bound * (1 + TOL_REL))
        violations += _collect(data, over, data.q, np.full(len(data.q), bound), "bounded-rates")
    if cert.bounded_rates is not None and cert.infinite_part is None:
        report.growth_trace = [math.inf] * len(family)
        report.notes.append("windows declared equal to the whole space; growth condition is vacuous")
    else:
        growth = _growth_reason(data, family, infinite, report)
        reason = reason or growth
    return _finish(violations, reason, report)


def check_corollary_certificate(model: GeneratorModel, phi, c: float, level_cap: int) -> CertificateReport:
    """Check ``phi >= q`` and ``Omega phi <= c phi`` on ``{level <= level_cap}``."""
    if isinstance(phi, LyapunovCertificate):
        phi = phi.phi
    data = _evaluate(model, phi, level_cap, nonnegative=False)
    rhs = c * data.phi
    violations = _collect(data, data.phi < data.q * (1 - TOL_REL), data.phi, data.q, "phi>=q")
    report = CertificateReport(Support.INCONCLUSIVE, CertificateKind.COROLLARY, c,
                               checked_states=len(data.states), level_cap=level_cap)
    reason = _drift_check(data, data.drift - rhs, report, violations, data.drift, rhs)
    return _finish(violations, reason, report)


def check_nonuniqueness_certificate(model: GeneratorModel, cert: LyapunovCertificate,
                                    level_cap: int) -> CertificateReport:
    """Check ``Omega phi >= c phi``, ``phi <= bound`` and ``max phi > 0`` on the window."""
    if cert.kind is not CertificateKind.NONUNIQUENESS:
        raise PreconditionError(f"expected a non-uniqueness certificate, got {cert.kind.value}")
    if not cert.c > 0:
        raise PreconditionError(f"the drift constant must be positive, got c={cert.c}")
    data = _evaluate(model, cert.phi, level_cap, nonnegative=False)
    rhs = cert.c * data.phi
    report = CertificateReport(Support.INCONCLUSIVE, cert.kind, cert.c, checked_states=len(data.states),
                               level_cap=level_cap, declarations={"bound": float(cert.bound)})
    violations: list = []
    reason = _drift_check(data, rhs - data.drift, report, violations, data.drift, rhs)
    bound = float(cert.bound)
    violations += _collect(data, data.phi > bound * (1 + TOL_REL) + TOL_REL, data.phi,
                           np.full(len(data.phi), bound), "bounded")
    k = int(np.argmax(data.phi))
    if not data.phi[k] > 0:
        violations.append(Violation(tuple(data.states[k]), float(data.phi[k]), 0.0, "sup-positive"))
    return _finish(violations, reason, report)


def check_certificate(model: GeneratorModel, cert: LyapunovCertificate, level_cap: int) -> CertificateReport:
    """Dispatch on ``cert.kind``."""
    if cert.kind is CertificateKind.UNIQUENESS:
        return check_uniqueness_certificate(model, cert, level_cap)
    if cert.kind is CertificateKind.COROLLARY:
        return check_corollary_certificate(model, cert.phi, cert.c, level_cap)
    return check_nonuniqueness_certificate(model, cert, level_cap)


def scan_drift_constant(model: GeneratorModel, phi, level_cap: int) -> Optional[float]:
    """Smallest ``c`` with ``Omega phi <= c phi`` on the window.

    Returns ``max Omega phi / phi`` over states with ``phi > 0``, or ``None``
    when some state has ``phi = 0`` but ``Omega phi > 0`` (no ``c`` works).
    """
    data = _evaluate(model, phi, level_cap, nonnegative=True)
    pos = data.phi > 0
    if np.any(~pos & (data.drift > 0)):
        return None
    if not pos.any():
        return 0.0
    return float(np.max(data.drift[pos] / data.phi[pos]))


# ---------------------------------------------------------------------------
# sidecar files

def certificate_from_spec(spec, model: GeneratorModel, overrides: Optional[dict] = None) -> LyapunovCertificate:
    params = dict(spec.params)
    params.update(model.params or {})
    params.update(overrides or {})
    phi = compile_state_function(spec.phi, model.dimension, params)
    c = spec.c
    if spec.kind == "corollary" and not math.isfinite(c):
        c = None
    return LyapunovCertificate(phi=phi, c=c, window_family=spec.windows, kind=spec.kind,
                               bound=spec.bound, bounded_rates=spec.bounded_rates, name=spec.name)


def load_certificate(path, model: GeneratorModel) -> LyapunovCertificate:
    """Read a certificate sidecar file and compile it against ``model``."""
    text = Path(path).read_text(encoding="utf-8")
    return certificate_from_spec(parse_certificate(text), model)

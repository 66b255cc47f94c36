"""Run several uniqueness methods on one model and reconcile the evidence."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .certificates import (
    GROWTH_RATIO,
    CertificateKind,
    LyapunovCertificate,
    check_corollary_certificate,
    check_nonuniqueness_certificate,
    check_uniqueness_certificate,
    load_certificate,
    scan_drift_constant,
)
from .dsl import compile_state_function, load_model, parse_expression
from .embedded import DEFAULT_DECAY, uniqueness_verdict_embedded
from .errors import ModelDefinitionError, QUniqueError, UsageError
from .generator import GeneratorModel, StateVec, total_rate, window_size
from .resolvent import uniqueness_verdict_resolvent
from .series import pure_birth_verdict
from .simulate import DEFAULT_EPSILON, DEFAULT_MAX_JUMPS, uniqueness_verdict_simulation
from .verdict import Label, MethodVerdict, VerdictThresholds, _jsonable, reconcile
from .zoo import build_fixture

log = logging.getLogger(__name__)

METHODS = ("lyapunov", "corollary", "nonuniqueness", "resolvent", "embedded", "simulate",
           "pure-birth-series")

__all__ = ["AnalysisConfig", "AnalysisResult", "METHODS", "run_analysis", "scan_drift_constant",
           "load_config_model", "default_certificate_cap"]


@dataclass(frozen=True)
class AnalysisConfig:
    """What to analyse and how.

    Exactly one of ``model_path`` and ``zoo`` names the model; ``params``
    override DSL parameters or are passed to the zoo constructor.
    """

    model_path: Optional[str] = None
    zoo: Optional[str] = None
    params: tuple = ()
    methods: tuple = ("resolvent", "embedded")
    lambdas: tuple = (1.0,)
    cap_schedule: Optional[tuple] = None
    trials: int = 200
    seed: Optional[int] = 0
    t_max: float = 1.0
    max_jumps: int = DEFAULT_MAX_JUMPS
    epsilon: float = DEFAULT_EPSILON
    cert_path: Optional[str] = None
    phi: Optional[str] = None
    cert_cap: Optional[int] = None
    series_n_max: int = 100_000
    weights_decay: float = DEFAULT_DECAY
    parallel: bool = False

    def __post_init__(self):
        if (self.model_path is None) == (self.zoo is None):
            raise UsageError("give exactly one of a model file and a zoo name")
        if not self.methods:
            raise UsageError("select at least one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise UsageError(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise UsageError("methods must not repeat")
        if "simulate" in self.methods and self.seed is None:
            raise UsageError("the simulate method needs a seed")
        if not self.lambdas or any(not (lam > 0 and math.isfinite(lam)) for lam in self.lambdas):
            raise UsageError(f"lambda values must be positive and finite, got {self.lambdas}")
        if self.cap_schedule is not None:
            caps = tuple(self.cap_schedule)
            if not caps or any(b <= a for a, b in zip(caps, caps[1:])) or caps[0] < 0:
                raise UsageError(f"cap schedule must be nonnegative and strictly increasing, got {caps}")
        if self.trials < 1 or self.max_jumps < 1 or not self.t_max > 0:
            raise UsageError("trials, max_jumps and t_max must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = dict(self.params)
        d["methods"] = list(self.methods)
        d["lambdas"] = list(self.lambdas)
        d["cap_schedule"] = list(self.cap_schedule) if self.cap_schedule is not None else None
        return d

    def digest(self) -> str:
        blob = json.dumps(_jsonable(self.to_dict()), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class AnalysisResult:
    overall: Label
    confidence: str
    methods: list
    model: dict
    config: AnalysisConfig
    provenance: dict = field(default_factory=dict)

    def to_report(self) -> dict:
        return _jsonable({
            "model": self.model,
            "config": self.config.to_dict(),
            "verdict": {"overall": self.overall.value, "confidence": self.confidence},
            "methods": [m.to_dict() for m in self.methods],
            "provenance": self.provenance,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_report(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"model    {self.model['name']} (dimension {self.model['dimension']})",
                 f"verdict  {self.overall.value} (confidence: {self.confidence})", ""]
        for m in self.methods:
            reason = m.evidence.get("reason") or m.evidence.get("verdict") or ""
            line = f"  {m.method:<18} {m.label.value:<15} {reason}"
            if m.error:
                line += f" [{m.error}]"
            lines.append(line.rstrip())
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# helpers

def _coerce(value):
    if isinstance(value, str):
        try:
            num = float(value)
        except ValueError:
            return value
        return int(num) if num.is_integer() and "." not in value and "e" not in value.lower() else num
    return value


def load_config_model(config: AnalysisConfig) -> GeneratorModel:
    params = {k: _coerce(v) for k, v in config.params}
    if config.model_path is not None:
        return load_model(config.model_path, params)
    return build_fixture(config.zoo, **params)


def default_certificate_cap(dimension: int, max_states: int = 50_000) -> int:
    """Largest level cap (at most 1000) whose window stays under ``max_states``."""
    cap = 1
    while cap < 1000 and window_size(cap + 1, dimension) <= max_states:
        cap += 1
    return cap


def safe_cap(model: GeneratorModel, cap: int) -> int:
    """Shrink ``cap`` below the first level whose rates overflow (one-dimensional models)."""
    if model.dimension != 1:
        return cap

    def ok(n):
        try:
            return math.isfinite(total_rate(model, StateVec._trusted((n,))))
        except ModelDefinitionError:
            return False
    if ok(cap):
        return cap
    lo, hi = 0, cap  # ok(lo) assumed, not ok(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


DRIFT_GROWTH = 0.05


def _grows(c_small, c_big) -> bool:
    # doubling the window may raise the tight constant by at most 5%
    return c_big > c_small * (1 + DRIFT_GROWTH) + 1e-12


def _phi_from_config(config, model, default_expr):
    expr = parse_expression(config.phi or default_expr, model.params or {})
    return compile_state_function(expr, model.dimension, model.params or {})


def _certificate(config, model, kind):
    if config.cert_path is None:
        return None
    cert = load_certificate(config.cert_path, model)
    return cert if cert.kind is kind else None


# ---------------------------------------------------------------------------
# individual methods

def _run_lyapunov(model, config) -> MethodVerdict:
    cap = safe_cap(model, config.cert_cap or default_certificate_cap(model.dimension))
    cert = _certificate(config, model, CertificateKind.UNIQUENESS)
    evidence = {}
    if cert is not None:
        cap = max(cap, cert.window_family[-1]) if cert.window_family else cap
    else:
        phi = _phi_from_config(config, model, "1 + level")
        c_big = scan_drift_constant(model, phi, cap)
        c_small = scan_drift_constant(model, phi, cap // 2)
        evidence["scanned_c"] = {str(cap // 2): c_small, str(cap): c_big}
        if c_big is None or c_small is None:
            return MethodVerdict("lyapunov", Label.INCONCLUSIVE,
                                 dict(evidence, reason="no drift constant: phi vanishes where Omega phi > 0"),
                                 {}, [cap])
        if _grows(c_small, c_big):
            return MethodVerdict("lyapunov", Label.INCONCLUSIVE,
                                 dict(evidence, reason="drift ratio still growing at the window edge"),
                                 {}, [cap // 2, cap])
        cert = LyapunovCertificate(phi, c_big, name=phi.expression)
    report = check_uniqueness_certificate(model, cert, cap)
    evidence.update(report.to_dict())
    evidence["phi"] = cert.expression
    label = Label.UNIQUE if report.supported else Label.INCONCLUSIVE
    evidence["reason"] = f"certificate {report.verdict.value} on level <= {cap}"
    return MethodVerdict("lyapunov", label, evidence, {"tol_rel": 1e-9, "growth_ratio": GROWTH_RATIO},
                         list(report.window_family))


def _run_corollary(model, config) -> MethodVerdict:
    cap = safe_cap(model, config.cert_cap or default_certificate_cap(model.dimension))
    cert = _certificate(config, model, CertificateKind.COROLLARY)
    evidence = {}
    if cert is not None:
        phi, c = cert.phi, cert.c
    elif config.phi is not None:
        phi, c = _phi_from_config(config, model, config.phi), None
    else:
        def phi(s):
            return 1.0 + total_rate(model, s)
        phi.expression = "1 + q"
        c = None
    if c is None:
        c_big = scan_drift_constant(model, phi, cap)
        c_small = scan_drift_constant(model, phi, cap // 2)
        evidence["scanned_c"] = {str(cap // 2): c_small, str(cap): c_big}
        if c_big is None or c_small is None or _grows(c_small, c_big):
            return MethodVerdict("corollary", Label.INCONCLUSIVE,
                                 dict(evidence, reason="no stable drift constant on the window"), {},
                                 [cap // 2, cap])
        c = c_big
    report = check_corollary_certificate(model, phi, c, cap)
    evidence.update(report.to_dict())
    evidence["phi"] = getattr(phi, "expression", "phi")
    evidence["reason"] = f"certificate {report.verdict.value} on level <= {cap}"
    label = Label.UNIQUE if report.supported else Label.INCONCLUSIVE
    return MethodVerdict("corollary", label, evidence, {"tol_rel": 1e-9}, [cap])


def _run_nonuniqueness(model, config) -> MethodVerdict:
    cert = _certificate(config, model, CertificateKind.NONUNIQUENESS)
    if cert is None:
        phi = model.metadata.get("nonuniqueness_phi")
        if phi is None:
            return MethodVerdict("nonuniqueness", Label.NOT_APPLICABLE,
                                 {"reason": "no non-uniqueness test function supplied"})
        cert = LyapunovCertificate(phi, phi.c, kind=CertificateKind.NONUNIQUENESS, bound=phi.bound,
                                   name="0.5 - tail")
    cap = config.cert_cap or (10_000 if model.dimension == 1 else default_certificate_cap(model.dimension))
    cap = safe_cap(model, cap)
    report = check_nonuniqueness_certificate(model, cert, cap)
    note = None
    if report.unresolved and not report.violations and (report.unresolved_from_level or 0) > 10:
        # retry below the levels where floating point cannot resolve the drift
        note = f"window shrunk from level {cap}: drift unresolvable from level {report.unresolved_from_level}"
        cap = report.unresolved_from_level - 1
        report = check_nonuniqueness_certificate(model, cert, cap)
    evidence = report.to_dict()
    if note:
        evidence["note"] = note
    evidence["phi"] = cert.expression
    evidence["reason"] = f"certificate {report.verdict.value} on level <= {cap}"
    label = Label.NONUNIQUE if report.supported else Label.INCONCLUSIVE
    return MethodVerdict("nonuniqueness", label, evidence, {"tol_rel": 1e-9}, [cap])


def _combine_lambdas(name, verdicts) -> MethodVerdict:
    if len(verdicts) == 1:
        return verdicts[0]
    label, _ = reconcile(verdicts)
    caps = sorted({c for v in verdicts for c in v.caps})
    evidence = {"per_lambda": [dict(v.evidence, label=v.label.value) for v in verdicts],
                "reason": "; ".join(f"lambda={v.evidence['lambda']}: {v.label.value}" for v in verdicts)}
    return MethodVerdict(name, label, evidence, verdicts[0].thresholds, caps)


def _run_resolvent(model, config) -> MethodVerdict:
    caps = list(config.cap_schedule) if config.cap_schedule else None
    return _combine_lambdas("resolvent", [uniqueness_verdict_resolvent(model, lam, caps)
                                          for lam in config.lambdas])


def _run_embedded(model, config) -> MethodVerdict:
    caps = list(config.cap_schedule) if config.cap_schedule else None
    return _combine_lambdas("embedded", [
        uniqueness_verdict_embedded(model, lam, caps, weights_decay=config.weights_decay)
        for lam in config.lambdas])


def _run_simulate(model, config) -> MethodVerdict:
    return uniqueness_verdict_simulation(model, None, config.t_max, config.trials, config.seed,
                                         config.epsilon, config.max_jumps)


def _pure_birth_rate(model):
    rate = model.metadata.get("pure_birth_rate")
    if rate is not None:
        return rate
    if model.dimension != 1:
        return None

    def probe(n):
        trans = model.transitions_of(StateVec._trusted((n,)))
        if len(trans) != 1 or trans[0][0][0] != n + 1:
            raise UsageError(f"model is not a pure birth process at state {n}")
        return trans[0][1]
    try:
        for n in range(64):
            probe(n)
    except UsageError:
        return None
    return probe


def _run_series(model, config) -> MethodVerdict:
    rate = _pure_birth_rate(model)
    if rate is None:
        return MethodVerdict("pure-birth-series", Label.NOT_APPLICABLE,
                             {"reason": "model is not a pure birth process"})
    return pure_birth_verdict(rate, config.series_n_max)


_RUNNERS = {
    "lyapunov": _run_lyapunov,
    "corollary": _run_corollary,
    "nonuniqueness": _run_nonuniqueness,
    "resolvent": _run_resolvent,
    "embedded": _run_embedded,
    "simulate": _run_simulate,
    "pure-birth-series": _run_series,
}


def _guarded(name, model, config) -> MethodVerdict:
    try:
        verdict = _RUNNERS[name](model, config)
    except UsageError:
        raise
    except (QUniqueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("method %s failed: %s", name, exc)
        kind = "model-definition" if isinstance(exc, ModelDefinitionError) else "numerical"
        verdict = MethodVerdict(name, Label.FAILED, {"error_kind": kind}, error=str(exc))
    return verdict


def _provenance(config, timestamp: bool) -> dict:
    return {
        "config_hash": config.digest(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()) if timestamp else None,
    }


def run_analysis(config: AnalysisConfig, model: Optional[GeneratorModel] = None,
                 timestamp: bool = True) -> AnalysisResult:
    """Run every selected method and reconcile.

    A method that raises is recorded as ``failed`` and the others still run.
    Apart from the timestamp the report is deterministic given ``config``.
    """
    model = model if model is not None else load_config_model(config)
    names = sorted(config.methods)
    if config.parallel and len(names) > 1:
        with ThreadPoolExecutor(max_workers=len(names)) as pool:
            results = list(pool.map(lambda n: _guarded(n, model, config), names))
    else:
        results = [_guarded(n, model, config) for n in names]
    overall, confidence = reconcile(results)
    info = {"name": model.name, "dimension": model.dimension,
            "source": config.model_path if config.model_path else f"zoo:{config.zoo}",
            "params": dict(model.params or {})}
    return AnalysisResult(overall, confidence, results, info, config, _provenance(config, timestamp))


def report_schema() -> dict:
    path = Path(__file__).with_name("report_schema.json")
    return json.loads(path.read_text(encoding="utf-8"))

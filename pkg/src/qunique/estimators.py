"""scikit-learn style front end.

Each analyzer is configured in ``__init__``, ``fit(model)`` runs its
method(s) on one model and stores the outcome in trailing-underscore
attributes, ``predict(models)`` labels a batch::

    >>> from qunique.estimators import ResolventAnalyzer
    >>> ResolventAnalyzer(lam=1.0).fit("pure_birth_quadratic").label_
    'non-unique'

A "model" is a :class:`~qunique.generator.GeneratorModel`, the name of a zoo
fixture, or a path to a ``.qm`` file.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .analysis import METHODS, AnalysisConfig, run_analysis
from .dsl import load_model
from .embedded import DEFAULT_DECAY
from .errors import UsageError
from .generator import GeneratorModel
from .simulate import DEFAULT_EPSILON, DEFAULT_MAX_JUMPS
from .zoo import FIXTURES, build_fixture

__all__ = ["check_model", "check_lambdas", "check_cap_schedule", "UniquenessAnalyzer",
           "ResolventAnalyzer", "EmbeddedAnalyzer", "SimulationAnalyzer", "LyapunovAnalyzer",
           "PureBirthSeriesAnalyzer"]


# ---------------------------------------------------------------------------
# validation helpers

def check_model(model):
    """Return ``(GeneratorModel, source)`` for a model object, zoo name or path."""
    if isinstance(model, GeneratorModel):
        return model, ("zoo", model.name)
    if isinstance(model, (str, Path)):
        text = str(model)
        if text in FIXTURES:
            return build_fixture(text), ("zoo", text)
        if text.endswith(".qm") or Path(text).is_file():
            return load_model(text), ("path", text)
        raise UsageError(f"{text!r} is neither a zoo fixture nor a .qm file")
    raise UsageError(f"expected a GeneratorModel, a zoo name or a .qm path, got {type(model).__name__}")


def check_lambdas(lam) -> tuple:
    lams = tuple(float(v) for v in np.atleast_1d(lam))
    if not lams or any(not (v > 0 and math.isfinite(v)) for v in lams):
        raise UsageError(f"lambda must be positive and finite, got {lam!r}")
    return lams


def check_cap_schedule(caps):
    if caps is None:
        return None
    caps = tuple(int(c) for c in caps)
    if not caps or caps[0] < 0 or any(b <= a for a, b in zip(caps, caps[1:])):
        raise UsageError(f"cap schedule must be nonnegative and strictly increasing, got {caps}")
    return caps


# ---------------------------------------------------------------------------
# estimators

class _BaseAnalyzer(BaseEstimator):
    """Shared ``fit``/``predict``; subclasses list their methods and config."""

    _methods: tuple = ()

    def _config_kwargs(self) -> dict:
        return {}

    def _selected_methods(self) -> tuple:
        return self._methods

    def fit(self, model, y=None):
        """Analyse one model.

        Sets ``label_``, ``confidence_``, ``verdicts_`` (method name to
        :class:`~qunique.verdict.MethodVerdict`), ``report_`` (JSON-ready
        dict), ``model_name_`` and ``dimension_``.
        """
        gm, (kind, ident) = check_model(model)
        src = {"model_path": ident} if kind == "path" else {"zoo": ident}
        config = AnalysisConfig(methods=self._selected_methods(), **src, **self._config_kwargs())
        result = run_analysis(config, model=gm, timestamp=False)
        self.result_ = result
        self.label_ = result.overall.value
        self.confidence_ = result.confidence
        self.verdicts_ = {m.method: m for m in result.methods}
        self.report_ = result.to_report()
        self.model_name_ = gm.name
        self.dimension_ = gm.dimension
        return self

    def predict(self, models) -> np.ndarray:
        """Overall label for each model; ``self`` is left untouched."""
        if isinstance(models, (GeneratorModel, str, Path)):
            models = [models]
        return np.array([clone(self).fit(m).label_ for m in models], dtype=object)

    def fit_predict(self, model, y=None) -> str:
        return self.fit(model).label_

    @property
    def verdict_(self):
        check_is_fitted(self, "verdicts_")
        if len(self.verdicts_) != 1:
            raise AttributeError("verdict_ is only defined for single-method analyzers")
        return next(iter(self.verdicts_.values()))


class UniquenessAnalyzer(_BaseAnalyzer):
    """Runs several methods and reconciles them.

    Parameters
    ----------
    methods : sequence of str
        Any of ``qunique.analysis.METHODS``.
    lam : float or sequence of float
        Resolvent parameter(s).
    cap_schedule : sequence of int, optional
        Level caps for the truncation methods.
    trials, seed, t_max : simulation settings.
    """

    def __init__(self, methods=("resolvent", "embedded"), lam=1.0, cap_schedule=None, trials=200,
                 seed=0, t_max=1.0, max_jumps=DEFAULT_MAX_JUMPS, epsilon=DEFAULT_EPSILON, phi=None,
                 cert=None, weights_decay=DEFAULT_DECAY):
        self.methods = methods
        self.lam = lam
        self.cap_schedule = cap_schedule
        self.trials = trials
        self.seed = seed
        self.t_max = t_max
        self.max_jumps = max_jumps
        self.epsilon = epsilon
        self.phi = phi
        self.cert = cert
        self.weights_decay = weights_decay

    def _selected_methods(self):
        methods = (self.methods,) if isinstance(self.methods, str) else tuple(self.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise UsageError(f"unknown method(s) {bad}")
        return methods

    def _config_kwargs(self):
        return dict(lambdas=check_lambdas(self.lam), cap_schedule=check_cap_schedule(self.cap_schedule),
                    trials=self.trials, seed=self.seed, t_max=self.t_max, max_jumps=self.max_jumps,
                    epsilon=self.epsilon, phi=self.phi, cert_path=self.cert,
                    weights_decay=self.weights_decay)


class ResolventAnalyzer(_BaseAnalyzer):
    """Bracket the maximal resolvent solution on growing windows."""

    _methods = ("resolvent",)

    def __init__(self, lam=1.0, cap_schedule=None):
        self.lam = lam
        self.cap_schedule = cap_schedule

    def _config_kwargs(self):
        return dict(lambdas=check_lambdas(self.lam), cap_schedule=check_cap_schedule(self.cap_schedule))


class EmbeddedAnalyzer(_BaseAnalyzer):
    """Return probabilities of the embedded chain with an added return state."""

    _methods = ("embedded",)

    def __init__(self, lam=1.0, cap_schedule=None, weights_decay=DEFAULT_DECAY):
        self.lam = lam
        self.cap_schedule = cap_schedule
        self.weights_decay = weights_decay

    def _config_kwargs(self):
        return dict(lambdas=check_lambdas(self.lam), cap_schedule=check_cap_schedule(self.cap_schedule),
                    weights_decay=self.weights_decay)


class SimulationAnalyzer(_BaseAnalyzer):
    """Monte Carlo paths with the summable-tail explosion flag."""

    _methods = ("simulate",)

    def __init__(self, trials=200, seed=0, t_max=1.0, max_jumps=DEFAULT_MAX_JUMPS, epsilon=DEFAULT_EPSILON):
        self.trials = trials
        self.seed = seed
        self.t_max = t_max
        self.max_jumps = max_jumps
        self.epsilon = epsilon

    def _config_kwargs(self):
        return dict(trials=self.trials, seed=self.seed, t_max=self.t_max, max_jumps=self.max_jumps,
                    epsilon=self.epsilon)

    def fit(self, model, y=None):
        super().fit(model, y)
        ev = self.verdict_.evidence
        self.explosion_fraction_ = ev["fraction"]
        self.wilson_interval_ = tuple(ev["wilson_95"])
        return self


class LyapunovAnalyzer(_BaseAnalyzer):
    """Drift certificate; ``phi`` defaults to ``1 + level``."""

    _methods = ("lyapunov",)

    def __init__(self, phi=None, cap=None, cert=None):
        self.phi = phi
        self.cap = cap
        self.cert = cert

    def _config_kwargs(self):
        return dict(phi=self.phi, cert_cap=self.cap, cert_path=self.cert)


class PureBirthSeriesAnalyzer(_BaseAnalyzer):
    """Divergence of ``sum 1/q_n`` for one-dimensional pure birth models."""

    _methods = ("pure-birth-series",)

    def __init__(self, n_max=100_000):
        self.n_max = n_max

    def _config_kwargs(self):
        return dict(series_n_max=int(self.n_max))

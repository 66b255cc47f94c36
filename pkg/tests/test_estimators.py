import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qunique.errors import UsageError
from qunique.estimators import (
    EmbeddedAnalyzer,
    LyapunovAnalyzer,
    PureBirthSeriesAnalyzer,
    ResolventAnalyzer,
    SimulationAnalyzer,
    UniquenessAnalyzer,
    check_cap_schedule,
    check_lambdas,
    check_model,
)
from qunique.verdict import Label
from qunique.zoo import build_fixture

from .test_analysis_cli import MODELS

CAPS = (25, 50, 100, 200)


def test_check_model_sources():
    m, src = check_model("pure_birth_linear")
    assert m.dimension == 1 and src == ("zoo", "pure_birth_linear")
    m2, src2 = check_model(build_fixture("schlogl", sites=2))
    assert m2.dimension == 2 and src2[0] == "zoo"
    m3, src3 = check_model(MODELS / "tandem_queue.qm")
    assert m3.dimension == 2 and src3[0] == "path"
    with pytest.raises(UsageError):
        check_model("no_such_model")
    with pytest.raises(UsageError):
        check_model(42)


def test_check_helpers():
    assert check_lambdas(2) == (2.0,)
    assert check_lambdas([0.5, 1]) == (0.5, 1.0)
    assert check_cap_schedule(None) is None
    assert check_cap_schedule(np.array([10, 20])) == (10, 20)
    for bad in (0, [1.0, -1.0], float("inf")):
        with pytest.raises(UsageError):
            check_lambdas(bad)
    with pytest.raises(UsageError):
        check_cap_schedule([20, 10])


def test_params_and_clone():
    est = UniquenessAnalyzer(methods=("resolvent",), lam=[0.5, 2.0], cap_schedule=CAPS)
    params = est.get_params()
    assert params["lam"] == [0.5, 2.0] and params["cap_schedule"] == CAPS
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(trials=10)
    assert est.trials == 10


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ResolventAnalyzer().verdict_


@pytest.mark.parametrize("name, expected", [("pure_birth_quadratic", "non-unique"),
                                            ("bounded_birth_death", "unique")])
def test_resolvent_fit(name, expected):
    est = ResolventAnalyzer(cap_schedule=CAPS).fit(name)
    assert est.label_ == expected and est.verdict_.method == "resolvent"
    assert est.model_name_ == name and est.dimension_ == 1
    assert est.report_["verdict"]["overall"] == expected


def test_predict_batch_leaves_estimator_unfitted():
    est = EmbeddedAnalyzer(cap_schedule=CAPS)
    labels = est.predict(["pure_birth_quadratic", "bounded_birth_death", build_fixture("pure_birth_exp2")])
    assert list(labels) == ["non-unique", "unique", "non-unique"] and labels.dtype == object
    assert not hasattr(est, "label_")
    assert est.fit_predict("pure_birth_quadratic") == "non-unique"


def test_uniqueness_analyzer_reconciles():
    est = UniquenessAnalyzer(methods=("resolvent", "embedded", "pure-birth-series"), cap_schedule=CAPS)
    est.fit("pure_birth_quadratic")
    assert est.label_ == "non-unique" and est.confidence_ == "normal"
    assert set(est.verdicts_) == {"resolvent", "embedded", "pure-birth-series"}
    with pytest.raises(AttributeError):
        est.verdict_
    with pytest.raises(UsageError):
        UniquenessAnalyzer(methods=("bogus",)).fit("pure_birth_linear")


def test_simulation_analyzer():
    est = SimulationAnalyzer(trials=100, seed=3, t_max=5.0).fit("pure_birth_exp2")
    lo, hi = est.wilson_interval_
    assert est.label_ == "non-unique" and est.confidence_ == "low"
    assert lo <= est.explosion_fraction_ <= hi and est.explosion_fraction_ > 0.9


def test_lyapunov_and_series_analyzers():
    lya = LyapunovAnalyzer(cap=100).fit(build_fixture("schlogl", sites=2))
    assert lya.label_ == "unique" and lya.verdict_.label is Label.UNIQUE
    assert PureBirthSeriesAnalyzer(n_max=10_000).fit("pure_birth_linear").label_ == "unique"
    series = PureBirthSeriesAnalyzer().fit(build_fixture("schlogl", sites=2))
    assert series.verdict_.label is Label.NOT_APPLICABLE


def test_model_file_input():
    est = ResolventAnalyzer(cap_schedule=CAPS).fit(MODELS / "pure_birth_linear.qm")
    assert est.model_name_ == "pure_birth_linear"
    assert est.report_["model"]["source"].endswith("pure_birth_linear.qm")

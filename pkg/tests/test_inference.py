import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlogloss.errors import DegenerateDenominator
from fairlogloss.fairness import empirical_rates
from fairlogloss.inference import (
    base_probs,
    marginal_q_from,
    predict,
    predict_dp,
    predict_label_dependent,
    predict_proba,
)
from fairlogloss.training import Model, train

from tests.conftest import make_synthetic


def _model(kind, theta, lambdas, ds):
    return Model(theta=np.asarray(theta, float), lambdas=tuple(lambdas), spec=empirical_rates(ds, kind))


@pytest.fixture
def ds():
    return make_synthetic(n=100, d=1, seed=0)


def test_zero_lambda_gives_base_sigmoid(ds):
    m = _model("dp", [0.7, -0.2, 0.1], [0.0], ds)
    np.testing.assert_array_equal(predict_proba(m, ds.X, ds.a), base_probs(m, ds.X))


def test_dp_cap_for_gamma1(ds):
    m = _model("dp", [5.0, 0.0, 0.0], [2.0], ds)
    p1 = m.spec.rates[0].p_gamma1
    pred = predict_dp(m, np.array([[3.0, 1.0]]), np.array([1]))
    assert pred.prob_positive == pytest.approx(p1 / 2.0)


def test_dp_floor_for_gamma0(ds):
    m = _model("dp", [5.0, 0.0, 0.0], [2.0], ds)
    p0 = m.spec.rates[0].p_gamma0
    pred = predict_dp(m, np.array([[-3.0, 0.0]]), np.array([0]))
    assert pred.prob_positive == pytest.approx(1 - p0 / 2.0)


def test_marginal_q_hand_values():
    # Q(0|y=1) = 0.6 means Q(1|y=1) = 0.4
    assert marginal_q_from(0.4, 0.4) == pytest.approx(0.4)
    assert marginal_q_from(0.8, 0.2) == pytest.approx(0.5)


def test_marginal_q_degenerate():
    with pytest.raises(DegenerateDenominator):
        marginal_q_from(1.0, 0.0)


@pytest.mark.parametrize("kind", ["eopp", "eodds"])
def test_label_dependent_zero_lambda_is_base(ds, kind):
    lams = [0.0, 0.0] if kind == "eodds" else [0.0]
    m = _model(kind, [0.7, -0.2, 0.1], lams, ds)
    np.testing.assert_allclose(predict_proba(m, ds.X, ds.a), base_probs(m, ds.X), rtol=1e-14)


def test_mixture_hand_value(ds):
    m = _model("eodds", [1.0, 0.0, 0.0], [0.5, -0.3], ds)
    x, a = ds.X[:1], ds.a[:1]
    pred = predict_label_dependent(m, x, a)
    d = pred.diagnostics
    q = marginal_q_from(d["Q_y1"], d["Q_y0"])
    assert pred.prob_positive == pytest.approx(d["P_y1"] * q + d["P_y0"] * (1 - q), rel=1e-14)


def test_eopp_negative_label_untruncated(ds):
    m = _model("eopp", [4.0, 0.0, 0.0], [3.0], ds)
    x, a = np.array([[2.0, 1.0]]), np.array([1])
    pred = predict_label_dependent(m, x, a)
    assert pred.diagnostics["P_y0"] == pytest.approx(float(base_probs(m, x)[0]))
    assert pred.diagnostics["P_y1"] < pred.diagnostics["P_y0"]


def test_degenerate_policy(ds):
    # rho = 0.5 sits above the tiny y=1 cap and below the high y=0 floor,
    # pinning Q(1|y=1)=1 and Q(1|y=0)=0
    m = _model("eodds", [30.0, 0.0, 0.0], [50.0, -50.0], ds)
    x, a = np.array([[0.0, 1.0]]), np.array([1])
    with pytest.raises(DegenerateDenominator):
        predict_proba(m, x, a)
    fallback = predict_proba(m, x, a, on_degenerate="base")
    assert fallback[0] == pytest.approx(float(base_probs(m, x)[0]))


def test_untrained_model_rejected():
    with pytest.raises(ValueError):
        predict_proba(None, np.zeros((1, 2)), np.zeros(1))


def test_wrong_predictor_for_kind(ds):
    m = _model("dp", [0.0, 0.0, 0.0], [0.0], ds)
    with pytest.raises(ValueError):
        predict_label_dependent(m, ds.X[:1], ds.a[:1])


@pytest.mark.parametrize("kind", ["dp", "eopp", "eodds"])
def test_predict_deterministic_and_batch_consistent(kind):
    data = make_synthetic(n=150, seed=3)
    m = train(data, kind)
    batch = predict_proba(m, data.X, data.a)
    for i in range(0, 150, 37):
        single = predict(m, data.X[i : i + 1], data.a[i : i + 1])
        assert single.prob_positive == pytest.approx(batch[i], rel=1e-15, abs=1e-15)
        assert single.hard_label == int(batch[i] > 0.5)
        assert predict(m, data.X[i : i + 1], data.a[i : i + 1]) == single


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.sampled_from(["dp", "eopp", "eodds"]),
)
def test_probability_in_unit_interval(theta, l1, l0, kind):
    data = make_synthetic(n=100, d=1, seed=0)
    lams = {"dp": [l1], "eopp": [l1], "eodds": [l1, l0]}[kind]
    m = _model(kind, theta, lams, data)
    p = predict_proba(m, data.X, data.a, on_degenerate="base")
    assert np.all((p >= 0) & (p <= 1))

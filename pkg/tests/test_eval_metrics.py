import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlogloss.data_io import Dataset, DatasetSchema, RawDataset
from fairlogloss.eval_metrics import (
    evaluate,
    evaluate_predictions,
    run_benchmark,
    sweep_regularization,
)
from fairlogloss.inference import predict_labels
from fairlogloss.training import TrainConfig, train

from tests.conftest import make_synthetic


def test_perfect_balanced_predictions():
    y = np.array([1, 0, 1, 0])
    a = np.array([1, 1, 0, 0])
    r = evaluate_predictions(y, a, y)
    assert r.error_rate == 0.0
    assert r.dp_violation == 0.0


def test_constant_classifier_is_fair():
    y = np.array([1, 0, 0, 1, 0, 0])
    a = np.array([1, 1, 1, 0, 0, 0])
    r = evaluate_predictions(y, a, np.ones(6))
    assert r.dp_violation == 0.0
    assert r.eodds_violation == 0.0
    assert r.error_rate == pytest.approx(4 / 6)


def test_direct_count_dp():
    r = evaluate_predictions(np.zeros(4), np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0]))
    assert r.dp_violation == 0.5


def test_missing_group_gives_none():
    r = evaluate_predictions(np.array([1, 1]), np.array([1, 0]), np.array([1, 0]))
    assert r.dp_violation == 1.0
    assert r.eodds_violation is None


def test_empty_test_set():
    with pytest.raises(ValueError):
        evaluate_predictions(np.array([]), np.array([]), np.array([]))


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.integers(4, 80))
def test_metrics_in_range(seed, n):
    rng = np.random.default_rng(seed)
    y, a, yh = rng.integers(0, 2, (3, n))
    r = evaluate_predictions(y, a, yh)
    assert 0 <= r.error_rate <= 1
    for v, hi in ((r.dp_violation, 1), (r.eopp_violation, 1), (r.eodds_violation, 2)):
        assert v is None or 0 <= v <= hi


def test_evaluate_matches_manual():
    ds = make_synthetic(n=200, seed=1)
    m = train(ds, "eodds")
    yh = predict_labels(m, ds.X, ds.a)
    r = evaluate(m, ds)
    assert r.error_rate == pytest.approx(np.mean(yh != ds.y))
    assert r.n_degenerate == 0


def test_benchmark_counts_and_determinism():
    ds = make_synthetic(n=200, seed=2)
    raw = _as_raw(ds)
    a = run_benchmark(raw, "dp", TrainConfig(), n_splits=3)
    b = run_benchmark(raw, "dp", TrainConfig(), n_splits=3)
    assert len(a.reports("fair")) == 3 and len(a.reports("baseline")) == 3
    assert a.seeds == [0, 1, 2]
    assert a.summary() == b.summary()
    assert a.fingerprint == b.fingerprint


def test_sweep_single_element_grid():
    ds = make_synthetic(n=150, seed=3)
    best, losses = sweep_regularization(ds, "dp", [0.2])
    assert best == 0.2 and list(losses) == [0.2]


def test_sweep_tie_goes_to_largest():
    # labels independent of everything: every C predicts the base rate 0.5
    n = 80
    X = np.zeros((n, 1))
    a = np.tile([0, 1], n // 2)
    y = np.tile([0, 0, 1, 1], n // 4)
    best, _ = sweep_regularization(Dataset(X, a, y), "dp", [0.001, 0.1, 0.5])
    assert best == 0.5


def test_sweep_empty_grid():
    with pytest.raises(ValueError):
        sweep_regularization(make_synthetic(), "dp", [])


def _as_raw(ds):
    """Wrap an encoded dataset as raw rows with an all-numeric schema."""
    cols = [f"f{i}" for i in range(ds.X.shape[1] - 1)]
    schema = DatasetSchema(
        name="synthetic", label="y", label_positive=["1"], protected="a",
        protected_positive=["1"], numeric=cols,
    )
    frame = pd.DataFrame(ds.X[:, :-1], columns=cols)
    return RawDataset(frame, ds.a, ds.y, schema)

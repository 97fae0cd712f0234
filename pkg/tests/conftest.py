from pathlib import Path

import numpy as np
import pytest

from fairlogloss import data_io
from fairlogloss.data_io import Dataset, DatasetSchema, load_csv

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


def make_synthetic(n=200, d=3, seed=0, group_shift=1.0, label_noise=1.0):
    """Features shifted by group, labels from a noisy linear rule."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d)) + group_shift * a[:, None] * np.linspace(1, 0.2, d)
    w = np.linspace(1.0, -0.5, d)
    score = X @ w + 0.5 * a - 0.3 + label_noise * rng.logistic(size=n)
    y = (score > 0).astype(int)
    # keep every (a, y) cell populated
    for k, (aa, yy) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        a[k], y[k] = aa, yy
    return Dataset(np.column_stack([X, a]), a, y, [f"x{i}" for i in range(d)] + ["a"])


@pytest.fixture
def synthetic():
    return make_synthetic()


_cache = {}


def load_benchmark(name):
    """Raw rows of a shipped benchmark CSV (cached per session)."""
    path = DATA_DIR / f"{name}.csv"
    if not path.exists():
        pytest.skip(f"{path} not present; run scripts/fetch_datasets.py")
    if name not in _cache:
        _cache[name] = load_csv(path, DatasetSchema.builtin(name))
    return _cache[name]


def encoded_benchmark(name):
    """Whole benchmark encoded with its own statistics."""
    return data_io.fit_transform(load_benchmark(name))[0]

"""Test error, fairness violations, the repeated-split benchmark and the C sweep."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import data_io
from .errors import FairLogLossError, MissingGroup
from .fairness import CriterionKind
from .inference import THRESHOLD, predict_proba
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
METRICS = ("error_rate", "dp_violation", "eopp_violation", "eodds_violation")


@dataclass
class EvalReport:
    n_test: int
    error_rate: float
    dp_violation: float | None
    eopp_violation: float | None
    eodds_violation: float | None
    positive_rate: dict = field(default_factory=dict)
    prob_dp_violation: float | None = None
    prob_eodds_violation: float | None = None
    n_degenerate: int = 0

    def as_row(self):
        return {k: getattr(self, k) for k in ("n_test",) + METRICS}


def _rate(values, mask):
    if not mask.any():
        raise MissingGroup("empty group")
    return float(values[mask].mean())


def _gap(values, a, cond=None):
    m1 = a == 1
    m0 = a == 0
    if cond is not None:
        m1 &= cond
        m0 &= cond
    return abs(_rate(values, m1) - _rate(values, m0))


def _maybe(fn):
    try:
        return fn()
    except MissingGroup:
        return None


def evaluate_predictions(y, a, y_hat, prob=None) -> EvalReport:
    """Metrics from hard predictions; ``prob`` adds the probabilistic diagnostics."""
    y = np.asarray(y)
    a = np.asarray(a)
    y_hat = np.asarray(y_hat).astype(float)
    if len(y) == 0:
        raise ValueError("empty test set")
    dp = _maybe(lambda: _gap(y_hat, a))
    g1 = _maybe(lambda: _gap(y_hat, a, y == 1))
    g0 = _maybe(lambda: _gap(y_hat, a, y == 0))
    rates = {}
    for grp in (0, 1):
        r = _maybe(lambda: _rate(y_hat, a == grp))
        if r is not None:
            rates[f"a={grp}"] = r
    report = EvalReport(
        n_test=len(y),
        error_rate=float(np.mean(y_hat != y)),
        dp_violation=dp,
        eopp_violation=g1,
        eodds_violation=None if g1 is None or g0 is None else g1 + g0,
        positive_rate=rates,
    )
    if prob is not None:
        prob = np.asarray(prob, dtype=float)
        report.prob_dp_violation = _maybe(lambda: _gap(prob, a))
        p1 = _maybe(lambda: _gap(prob, a, y == 1))
        p0 = _maybe(lambda: _gap(prob, a, y == 0))
        report.prob_eodds_violation = None if p1 is None or p0 is None else p1 + p0
    return report


def evaluate(model, test_dataset) -> EvalReport:
    from .inference import conditional_probs

    prob = predict_proba(model, test_dataset.X, test_dataset.a, on_degenerate="base")
    report = evaluate_predictions(test_dataset.y, test_dataset.a, prob > THRESHOLD, prob)
    if model.spec.kind is not None and model.spec.kind.label_dependent:
        _, q1 = conditional_probs(model, test_dataset.X, test_dataset.a, 1)
        _, q0 = conditional_probs(model, test_dataset.X, test_dataset.a, 0)
        report.n_degenerate = int(np.sum((1.0 - q1) + q0 < 1e-12))
    return report


@dataclass
class SplitResult:
    split: int
    seed: int
    model: str
    report: EvalReport | None
    error: str | None = None
    reg_C: float | None = None
    lambdas: tuple = ()


@dataclass
class BenchmarkSummary:
    results: list
    seeds: list
    fingerprint: str
    kind: str
    n_splits: int
    split_fraction: float

    def reports(self, model):
        return [r.report for r in self.results if r.model == model and r.report is not None]

    def stats(self, model, metric):
        vals = [getattr(r, metric) for r in self.reports(model)]
        vals = np.array([v for v in vals if v is not None], dtype=float)
        if vals.size == 0:
            return None, None
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return float(vals.mean()), std

    def summary(self):
        out = {}
        for model in ("fair", "baseline"):
            out[model] = {m: self.stats(model, m) for m in METRICS}
        return out


def config_fingerprint(**parts):
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fit_split(raw_train, raw_test, kind, config, select_C, seed):
    """Preprocess on the training rows only, then train and evaluate."""
    if select_C:
        best_C, _ = sweep_regularization(raw_train, kind, select_C, 0.2, seed, config)
        config = replace(config, reg_C=best_C)
    train_ds, stats = data_io.fit_transform(raw_train)
    test_ds = data_io.apply(stats, raw_test)
    model = train(train_ds, kind, config)
    return model, evaluate(model, test_ds), config.reg_C


def run_benchmark(
    dataset,
    kind,
    config: TrainConfig | None = None,
    n_splits=20,
    split_fraction=0.7,
    base_seed=0,
    select_C=None,
) -> BenchmarkSummary:
    """Train the fair model and the unconstrained baseline on repeated random splits.

    ``dataset`` is a RawDataset; preprocessing is refitted on each training
    split.  Split i uses seed ``base_seed + i``.  ``select_C`` optionally
    gives a grid to choose C by held-out log loss inside each training split.
    """
    if n_splits < 1:
        raise ValueError("n_splits must be >= 1")
    config = config or TrainConfig()
    kind = CriterionKind.parse(kind)
    seeds = [base_seed + i for i in range(n_splits)]
    results = []
    for i, seed in enumerate(seeds):
        raw_train, raw_test = data_io.split(dataset, split_fraction, seed)
        for name, k in (("fair", kind), ("baseline", None)):
            try:
                model, report, C = _fit_split(raw_train, raw_test, k, config, select_C, seed)
                results.append(SplitResult(i, seed, name, report, None, C, model.lambdas))
            except FairLogLossError as exc:
                log.warning("split %d (%s) failed: %s", i, name, exc)
                results.append(SplitResult(i, seed, name, None, f"{type(exc).__name__}: {exc}"))
        log.info("split %d/%d done", i + 1, n_splits)
    fingerprint = config_fingerprint(
        kind=kind.value if kind else None,
        config=asdict(config),
        n_splits=n_splits,
        split_fraction=split_fraction,
        base_seed=base_seed,
        select_C=list(select_C) if select_C else None,
        schema=getattr(getattr(dataset, "schema", None), "name", None),
        n=len(dataset),
    )
    return BenchmarkSummary(
        results, seeds, fingerprint, kind.value if kind else "none", n_splits, split_fraction
    )


def log_loss(y, prob, eps=1e-15):
    prob = np.clip(np.asarray(prob, dtype=float), eps, 1 - eps)
    y = np.asarray(y)
    return float(-np.mean(y * np.log(prob) + (1 - y) * np.log1p(-prob)))


def sweep_regularization(
    dataset, kind, C_grid=DEFAULT_C_GRID, validation_fraction=0.2, seed=0, config=None
):
    """Pick C by held-out log loss; ties go to the larger C.

    Accepts a RawDataset (preprocessing refitted on the fitting part) or an
    already encoded Dataset.
    """
    C_grid = list(C_grid)
    if not C_grid:
        raise ValueError("empty C grid")
    config = config or TrainConfig()
    fit_part, val_part = data_io.split(dataset, 1.0 - validation_fraction, seed)
    if hasattr(fit_part, "schema"):
        fit_ds, stats = data_io.fit_transform(fit_part)
        val_ds = data_io.apply(stats, val_part)
    else:
        fit_ds, val_ds = fit_part, val_part
    losses = {}
    for C in C_grid:
        model = train(fit_ds, kind, replace(config, reg_C=float(C)))
        prob = predict_proba(model, val_ds.X, val_ds.a, on_degenerate="base")
        losses[float(C)] = log_loss(val_ds.y, prob)
    best = min(losses.values())
    tied = [C for C, v in losses.items() if v <= best + 1e-12 * max(1.0, abs(best))]
    return max(tied), losses

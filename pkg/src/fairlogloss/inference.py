"""Label-free predictions from a trained model.

Demographic parity does not involve the true label, so the truncated
predictor is used directly.  For equalized opportunity/odds the predictor
and approximator are conditioned on y; the label is marginalized out with
the approximator's own estimate of P(y=1 | x, a):

    q = Q(1 | y=0) / (Q(0 | y=1) + Q(1 | y=0))
    P(1 | x, a) = P(1 | y=1) q + P(1 | y=0) (1 - q)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominator
from .fairness import CriterionKind
from .model_core import (
    add_bias,
    approximator_array,
    predictor_array,
    sigmoid,
    truncation_bounds,
)

log = logging.getLogger(__name__)

THRESHOLD = 0.5
DEGENERATE_TOL = 1e-12


@dataclass
class Prediction:
    prob_positive: float
    hard_label: int
    diagnostics: dict = field(default_factory=dict)


def _check(model):
    if model is None or getattr(model, "theta", None) is None:
        raise ValueError("model is not trained")


def _as_batch(X, a):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=np.int64))
    if len(X) != len(a):
        raise ValueError("X and a must have the same number of rows")
    return X, a


def base_probs(model, X):
    _check(model)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return sigmoid(add_bias(X) @ model.theta)


def conditional_probs(model, X, a, y_value):
    """Predictor and approximator P(1|x,a,y), Q(1|x,a,y) for a fixed label value."""
    X, a = _as_batch(X, a)
    rho = base_probs(model, X)
    y = np.full(len(a), y_value)
    side, lam, p1, p0 = model.spec.example_params(model.lambdas, a, y)
    cap, floor, kappa = truncation_bounds(side, lam, p1, p0)
    p = predictor_array(rho, cap, floor)
    return p, approximator_array(p, kappa)


def predict_proba(model, X, a, on_degenerate="raise"):
    """Vectorised P(y_hat=1 | x, a).

    ``on_degenerate`` decides what happens to rows whose marginalization
    denominator vanishes: 'raise' (DegenerateDenominator) or 'base' (fall back
    to the untruncated sigmoid and log a warning).
    """
    _check(model)
    X, a = _as_batch(X, a)
    kind = model.spec.kind
    if kind is None or kind is CriterionKind.DEMOGRAPHIC_PARITY:
        return conditional_probs(model, X, a, 1)[0]

    p_y1, q_y1 = conditional_probs(model, X, a, 1)
    p_y0, q_y0 = conditional_probs(model, X, a, 0)
    denom = (1.0 - q_y1) + q_y0
    bad = denom < DEGENERATE_TOL
    if bad.any():
        if on_degenerate == "raise":
            raise DegenerateDenominator(
                f"{int(bad.sum())} row(s) have Q(0|y=1) + Q(1|y=0) < {DEGENERATE_TOL}"
            )
        log.warning("%d row(s) with degenerate marginalization; using base probability", int(bad.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(bad, 0.0, q_y0 / np.where(bad, 1.0, denom))
    prob = p_y1 * q + p_y0 * (1.0 - q)
    if bad.any():
        prob = np.where(bad, base_probs(model, X), prob)
    return np.clip(prob, 0.0, 1.0)


def predict_labels(model, X, a, on_degenerate="raise"):
    return (predict_proba(model, X, a, on_degenerate) > THRESHOLD).astype(np.int64)


def predict_dp(model, x, a) -> Prediction:
    _check(model)
    if model.spec.kind not in (None, CriterionKind.DEMOGRAPHIC_PARITY):
        raise ValueError("predict_dp needs a demographic-parity (or unconstrained) model")
    p, _ = conditional_probs(model, x, a, 1)
    prob = float(p[0])
    return Prediction(prob, int(prob > THRESHOLD))


def marginal_q(model, x, a) -> float:
    """Approximator estimate of P(y=1 | x, a) for a label-dependent model."""
    _check(model)
    _, q1 = conditional_probs(model, x, a, 1)
    _, q0 = conditional_probs(model, x, a, 0)
    return marginal_q_from(float(q1[0]), float(q0[0]))


def marginal_q_from(q1_given_y1, q1_given_y0) -> float:
    denom = (1.0 - q1_given_y1) + q1_given_y0
    if denom < DEGENERATE_TOL:
        raise DegenerateDenominator(f"denominator {denom:.3e} below {DEGENERATE_TOL}")
    return q1_given_y0 / denom


def predict_label_dependent(model, x, a) -> Prediction:
    _check(model)
    if model.spec.kind is None or not model.spec.kind.label_dependent:
        raise ValueError("predict_label_dependent needs an equalized opportunity/odds model")
    p1, q1 = conditional_probs(model, x, a, 1)
    p0, q0 = conditional_probs(model, x, a, 0)
    q = marginal_q_from(float(q1[0]), float(q0[0]))
    prob = float(p1[0]) * q + float(p0[0]) * (1.0 - q)
    diag = {
        "P_y1": float(p1[0]), "P_y0": float(p0[0]),
        "Q_y1": float(q1[0]), "Q_y0": float(q0[0]),
        "q": q,
    }
    return Prediction(prob, int(prob > THRESHOLD), diag)


def predict(model, x, a) -> Prediction:
    kind = model.spec.kind
    if kind is None or kind is CriterionKind.DEMOGRAPHIC_PARITY:
        return predict_dp(model, x, a)
    return predict_label_dependent(model, x, a)

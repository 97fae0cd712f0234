"""Truncated-sigmoid predictor and quadratic approximator distributions.

Every example carries a side (gamma_1, gamma_0 or neither) for the
constraint that touches it, the multiplier ``lam`` of that constraint and
the two group rates.  The base probability is the logistic sigmoid of
``theta . [x; 1]``; the predictor clamps it from above or below depending on
side and sign of ``lam``, and the approximator is a quadratic reshaping of
the clamped value.

Scalar functions mirror the vectorised ``*_array`` versions used by the
training loop.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ConstraintSide(enum.IntEnum):
    GAMMA1 = 1
    GAMMA0 = 0
    NEITHER = -1


@dataclass(frozen=True)
class GroupRates:
    """Empirical frequencies of the two constraint groups."""

    p_gamma1: float
    p_gamma0: float

    def __post_init__(self):
        if not (self.p_gamma1 > 0 and self.p_gamma0 > 0):
            raise ValueError(f"group rates must be positive, got {self}")

    def for_side(self, side):
        return self.p_gamma1 if side == ConstraintSide.GAMMA1 else self.p_gamma0


def add_bias(X):
    """Append the constant bias column, giving phi(x, 1) for every row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return np.append(X, 1.0)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def sigmoid(s):
    """Numerically stable logistic function (never exponentiates a positive score)."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def base_probability(theta, x) -> float:
    """e^{theta.phi(x,1)} / Z_theta(x) with phi(x,1) = x (bias already appended), phi(x,0) = 0."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != x.shape:
        raise ValueError(f"dimension mismatch: theta {theta.shape} vs x {x.shape}")
    score = float(theta @ x)
    if not np.isfinite(score):
        raise ValueError(f"non-finite score {score}")
    return float(sigmoid(np.array([score]))[0])


def truncation_bounds(side, lam, p1, p0):
    """Return (cap, floor, kappa) arrays for the clamp and the approximator curvature.

    cap is +inf and floor -inf where no clamp applies.  kappa is the
    coefficient in Q = P (1 + kappa (1 - P)): lam/p1 on gamma_1, -lam/p0 on
    gamma_0, zero elsewhere.
    """
    side = np.asarray(side)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), side.shape)
    p1 = np.broadcast_to(np.asarray(p1, dtype=float), side.shape)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), side.shape)

    g1 = side == ConstraintSide.GAMMA1
    g0 = side == ConstraintSide.GAMMA0
    p = np.where(g1, p1, np.where(g0, p0, 1.0))
    kappa = np.zeros(side.shape)
    kappa[g1] = lam[g1] / p[g1]
    kappa[g0] = -lam[g0] / p[g0]

    cap = np.full(side.shape, np.inf)
    floor = np.full(side.shape, -np.inf)
    upper = kappa > 0
    lower = kappa < 0
    with np.errstate(over="ignore"):  # subnormal kappa: no clamp, inf is right
        cap[upper] = 1.0 / kappa[upper]
        floor[lower] = 1.0 + 1.0 / kappa[lower]
    return cap, floor, kappa


def predictor_array(rho, cap, floor):
    return np.minimum(np.maximum(rho, floor), cap)


def truncated_array(rho, cap, floor):
    # exact ties count as truncated
    return (rho >= cap) | (rho <= floor)


def approximator_array(p_hat, kappa):
    p_hat = np.asarray(p_hat, dtype=float)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), p_hat.shape)
    q = np.clip(p_hat * (1.0 + kappa * (1.0 - p_hat)), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        inv = 1.0 / kappa
    # pin the truncation points exactly
    q = np.where((kappa > 0) & (p_hat >= inv), 1.0, q)
    q = np.where((kappa < 0) & (p_hat <= 1.0 + inv), 0.0, q)
    return q


def predictor_probability(rho_e, side, lam, rates: GroupRates) -> float:
    """Clamp the base probability according to side and sign of lam."""
    if not 0.0 <= rho_e <= 1.0:
        raise ValueError(f"rho_e must lie in [0,1], got {rho_e}")
    side = ConstraintSide(side)
    if side is ConstraintSide.NEITHER or lam == 0:
        return float(rho_e)
    cap, floor, _ = truncation_bounds(
        np.array([int(side)]), lam, rates.p_gamma1, rates.p_gamma0
    )
    return float(predictor_array(np.array([rho_e]), cap, floor)[0])


def approximator_probability(p_hat, side, lam, rates: GroupRates) -> float:
    """Q(y=1) = P (1 + (lam/p_gamma1)(1-P)) on gamma_1, with -lam/p_gamma0 on gamma_0."""
    side = ConstraintSide(side)
    if side is ConstraintSide.NEITHER or lam == 0:
        return float(p_hat)
    _, _, kappa = truncation_bounds(
        np.array([int(side)]), lam, rates.p_gamma1, rates.p_gamma0
    )
    return float(approximator_array(np.array([p_hat], dtype=float), kappa)[0])


def reshaping_curve(lambda_over_p, side, n_points):
    """Sample (P, Q) pairs over the valid predictor range for one group.

    ``lambda_over_p`` is lam divided by the rate of the group on ``side``.
    The range ends at the truncation point when one exists, where Q hits 1
    (cap) or 0 (floor).
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    side = ConstraintSide(side)
    if side is ConstraintSide.NEITHER:
        kappa = 0.0
    elif side is ConstraintSide.GAMMA1:
        kappa = float(lambda_over_p)
    else:
        kappa = -float(lambda_over_p)

    lo, hi = 0.0, 1.0
    if kappa > 1.0:
        hi = 1.0 / kappa
    elif kappa < -1.0:
        lo = 1.0 + 1.0 / kappa
    p_hat = np.linspace(lo, hi, n_points)
    p_hat[-1] = hi
    q = approximator_array(p_hat, kappa)
    return list(zip(p_hat.tolist(), q.tolist()))

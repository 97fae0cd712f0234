"""Threshold search for the fairness multiplier at fixed theta.

With u = 1/lam > 0 the gamma_1 cap is p1*u and the gamma_0 floor is
1 - p0*u.  The total shift of the two group means,

    h(u) = mean(max(0, e1 - p1 u)) + mean(max(0, (1 - p0 u) - e0)),

is piecewise linear and decreasing in u, with one breakpoint per example
(e/p1 for gamma_1, (1-e)/p0 for gamma_0).  Walking the merged breakpoints
from the largest u downward moves the two thresholds alternately, one
example at a time, until the shift reaches the raw mean gap; the final
segment is then solved exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import GroupRates


@dataclass
class GroupProbs:
    e1: np.ndarray
    e0: np.ndarray

    def __post_init__(self):
        self.e1 = np.asarray(self.e1, dtype=float).ravel()
        self.e0 = np.asarray(self.e0, dtype=float).ravel()
        if self.e1.size == 0 or self.e0.size == 0:
            raise ValueError("both groups need at least one probability")


def truncated_group_means(probs: GroupProbs, rates: GroupRates, lam):
    """Means of the clamped probabilities of each group at ``lam``."""
    e1, e0 = probs.e1, probs.e0
    p1, p0 = rates.p_gamma1, rates.p_gamma0
    if lam > 0:
        return float(np.minimum(e1, p1 / lam).mean()), float(np.maximum(e0, 1 - p0 / lam).mean())
    if lam < 0:
        return float(np.maximum(e1, 1 + p1 / lam).mean()), float(np.minimum(e0, -p0 / lam).mean())
    return float(e1.mean()), float(e0.mean())


def _solve_positive(e1, e0, p1, p0, gap):
    """lam > 0 equalizing the clamped means, assuming mean(e1) - mean(e0) = gap > 0."""
    n1, n0 = e1.size, e0.size
    bps = np.concatenate([e1 / p1, (1.0 - e0) / p0])
    slope = np.concatenate([np.full(n1, p1 / n1), np.full(n0, p0 / n0)])
    # contribution of each active term to h at u = 0
    offset = np.concatenate([e1 / n1, (1.0 - e0) / n0])

    # descending, gamma_1 first on ties
    order = np.argsort(-bps, kind="stable")
    bps = bps[order]
    S = np.cumsum(slope[order])
    N = np.cumsum(offset[order])

    # h with the first k+1 terms active, evaluated where term k+2 switches on
    nxt = np.append(bps[1:], 0.0)
    h_next = N - S * nxt
    k = int(np.searchsorted(h_next >= gap, True))  # h_next is nondecreasing
    k = min(k, bps.size - 1)
    u = (N[k] - gap) / S[k]
    return 1.0 / u


def solve_lambda(probs: GroupProbs, rates: GroupRates) -> float:
    """Multiplier making the clamped group means equal.

    Returns 0 when the raw means already agree.  When mean(e1) < mean(e0)
    the groups are swapped and the swapped solution is negated.
    """
    e1, e0 = probs.e1, probs.e0
    gap = e1.mean() - e0.mean()
    if gap == 0:
        return 0.0
    if gap > 0:
        return float(_solve_positive(e1, e0, rates.p_gamma1, rates.p_gamma0, gap))
    return -float(_solve_positive(e0, e1, rates.p_gamma0, rates.p_gamma1, -gap))

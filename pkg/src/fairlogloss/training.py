"""Learning theta for the fair robust log-loss classifier.

The objective at theta is evaluated with the fairness multipliers re-solved
exactly at that theta, so the function handed to the optimizer is the
convex reduced objective

    sum_i loss_i(theta, lam*(theta)) + C/2 ||theta||^2.

Its gradient is sum_i (Q_i - y_i) [x_i; 1] + C theta, where Q_i is the
approximator probability of example i (1 on a cap, 0 on a floor).

Away from truncation boundaries the Hessian is available in closed form:
the curvature of the untruncated examples at fixed lam, plus one rank-one
term per constraint for the movement of lam* with theta (implicit
differentiation of the equal-means condition).  The default optimizer is
a damped Newton method on that Hessian; L-BFGS is kept as an alternative.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import NonFiniteObjective
from .fairness import CriterionKind, FairnessSpec, empirical_rates
from .lambda_solver import GroupProbs, solve_lambda
from .model_core import (
    ConstraintSide,
    GroupRates,
    add_bias,
    approximator_array,
    predictor_array,
    sigmoid,
    truncated_array,
    truncation_bounds,
)

log = logging.getLogger(__name__)

# a raw gap this small counts as sitting on the kink when testing convergence
KINK_GAP_TOL = 1e-9
# multipliers this close (relatively) to the no-clamp band edge use the kink model
KINK_BAND = 0.05


@dataclass
class TrainConfig:
    reg_C: float = 0.01
    max_iters: int = 2000
    grad_tol: float = 1e-6
    objective_tol: float = 1e-10
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    memory: int = 10
    max_backtracks: int = 60
    method: str = "newton"

    def __post_init__(self):
        if self.reg_C < 0:
            raise ValueError("reg_C must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.grad_tol > 0 and self.objective_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.method not in ("newton", "lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class Model:
    theta: np.ndarray
    lambdas: tuple
    spec: FairnessSpec
    feature_names: list = field(default_factory=list)
    preprocess: object = None
    config: TrainConfig | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def kind(self):
        return self.spec.kind


def _design(dataset):
    return add_bias(dataset.X)


def solve_lambdas(theta, dataset, spec: FairnessSpec, Xb=None):
    """lam* for every constraint of ``spec`` at ``theta``."""
    if Xb is None:
        Xb = _design(dataset)
    rho = sigmoid(Xb @ theta)
    sides = spec.side_matrix(dataset.a, dataset.y)
    out = []
    for s, rates in zip(sides, spec.rates):
        probs = GroupProbs(rho[s == ConstraintSide.GAMMA1], rho[s == ConstraintSide.GAMMA0])
        out.append(solve_lambda(probs, rates))
    return tuple(out)


def _terms(theta, lambdas, Xb, a, y, spec):
    score = Xb @ theta
    side, lam, p1, p0 = spec.example_params(lambdas, a, y)
    cap, floor, kappa = truncation_bounds(side, lam, p1, p0)
    rho = sigmoid(score)
    at_cap = rho >= cap
    at_floor = rho <= floor

    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(
            at_cap,
            -np.log(cap) + score,
            np.where(at_floor, -np.log1p(-floor), np.logaddexp(0.0, score)),
        )
    per = per - y * score
    q = np.where(at_cap, 1.0, np.where(at_floor, 0.0, approximator_array(rho, kappa)))
    return per, q


def loss(theta, lambdas, dataset, spec: FairnessSpec, reg_C) -> float:
    """Sum of per-example losses at fixed multipliers plus (C/2)||theta||^2."""
    theta = np.asarray(theta, dtype=float)
    per, _ = _terms(theta, lambdas, _design(dataset), dataset.a, dataset.y, spec)
    value = float(per.sum() + 0.5 * reg_C * theta @ theta)
    if not np.isfinite(value):
        raise NonFiniteObjective(f"objective is {value}")
    return value


def subgradient(theta, lambdas, dataset, spec: FairnessSpec, reg_C):
    theta = np.asarray(theta, dtype=float)
    Xb = _design(dataset)
    _, q = _terms(theta, lambdas, Xb, dataset.a, dataset.y, spec)
    return Xb.T @ (q - dataset.y) + reg_C * theta


def truncation_indicator(theta, x, side, lam, rates: GroupRates) -> bool:
    """True when the clamp is active for feature vector ``x`` (bias included)."""
    if lam == 0 or ConstraintSide(side) is ConstraintSide.NEITHER:
        return False
    rho = sigmoid(np.array([float(np.dot(theta, x))]))
    cap, floor, _ = truncation_bounds(np.array([int(side)]), lam, rates.p_gamma1, rates.p_gamma0)
    return bool(truncated_array(rho, cap, floor)[0])


def objective(theta, dataset, spec: FairnessSpec, reg_C) -> float:
    """Reduced objective with lam* re-solved at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return loss(theta, solve_lambdas(theta, dataset, spec), dataset, spec, reg_C)


def constraint_gaps(theta, lambdas, dataset, spec: FairnessSpec):
    """Clamped-probability mean gap of each constraint over the sample."""
    Xb = _design(dataset)
    rho = sigmoid(Xb @ theta)
    side, lam, p1, p0 = spec.example_params(lambdas, dataset.a, dataset.y)
    cap, floor, _ = truncation_bounds(side, lam, p1, p0)
    pred = predictor_array(rho, cap, floor)
    gaps = []
    for s in spec.side_matrix(dataset.a, dataset.y):
        gaps.append(float(pred[s == ConstraintSide.GAMMA1].mean() - pred[s == ConstraintSide.GAMMA0].mean()))
    return gaps


class _Problem:
    """Objective, gradient and Hessian with lam* re-solved at every theta."""

    def __init__(self, dataset, spec, reg_C):
        self.Xb = _design(dataset)
        self.a = np.asarray(dataset.a)
        self.y = np.asarray(dataset.y, dtype=float)
        self.spec = spec
        self.reg_C = reg_C
        self.sides = spec.side_matrix(self.a, self.y)
        self.n_evals = 0

    def lambdas(self, rho):
        out = []
        for s, rates in zip(self.sides, self.spec.rates):
            probs = GroupProbs(rho[s == ConstraintSide.GAMMA1], rho[s == ConstraintSide.GAMMA0])
            out.append(solve_lambda(probs, rates))
        return tuple(out)

    def __call__(self, theta):
        self.n_evals += 1
        rho = sigmoid(self.Xb @ theta)
        lams = self.lambdas(rho)
        per, q = _terms(theta, lams, self.Xb, self.a, self.y, self.spec)
        f = float(per.sum() + 0.5 * self.reg_C * theta @ theta)
        if not np.isfinite(f):
            raise NonFiniteObjective(f"objective is {f}")
        g = self.Xb.T @ (q - self.y) + self.reg_C * theta
        return f, g, lams

    def hessian(self, theta, lams, skip=()):
        Xb = self.Xb
        n = Xb.shape[0]
        rho = sigmoid(Xb @ theta)
        side, lam, p1, p0 = self.spec.example_params(lams, self.a, self.y)
        cap, floor, kappa = truncation_bounds(side, lam, p1, p0)
        trunc = truncated_array(rho, cap, floor)
        dens = np.where(trunc, 0.0, rho * (1.0 - rho))
        w = dens * (1.0 + kappa * (1.0 - 2.0 * rho))
        H = Xb.T @ (w[:, None] * Xb)
        H[np.diag_indices_from(H)] += self.reg_C
        for i, (s, l) in enumerate(zip(self.sides, lams)):
            if l == 0 or i in skip:
                continue
            g1 = s == ConstraintSide.GAMMA1
            g0 = s == ConstraintSide.GAMMA0
            k = int(np.sum(trunc & (g1 | g0)))
            if k == 0:
                continue
            # gradient of the clamped mean gap at fixed lam
            grad_gap = Xb[g1].T @ dens[g1] / g1.sum() - Xb[g0].T @ dens[g0] / g0.sum()
            H += (n * n * l * l / k) * np.outer(grad_gap, grad_gap)
        return H


    def kink_candidates(self, theta, lams):
        """Constraints whose multiplier is zero or within KINK_BAND of the edge of
        the no-clamp band, i.e. whose raw gap is at or next to zero."""
        rho = sigmoid(self.Xb @ theta)
        out = []
        for i, (s, r) in enumerate(zip(self.sides, self.spec.rates)):
            up, down = _band_edges(rho[s == ConstraintSide.GAMMA1], rho[s == ConstraintSide.GAMMA0], r)
            lam = lams[i]
            if lam == 0 or (0 < lam <= up * (1 + KINK_BAND)) or (0 < -lam <= down * (1 + KINK_BAND)):
                out.append(i)
        return out

    def kink_model(self, theta, lams, active):
        """Local model with the constraints in ``active`` placed on their zero-gap kink.

        Inside the band where no example is clamped the multiplier of a
        constraint can move freely between -down and up without changing the
        predictor, so near a zero raw gap its contribution to the objective
        behaves like n * (up * gap^+ + down * gap^-).  Returns the gradient of
        the remaining smooth part and one _Kink per active constraint.
        """
        Xb = self.Xb
        n = Xb.shape[0]
        rho = sigmoid(Xb @ theta)
        dens = rho * (1.0 - rho)
        lams0 = tuple(0.0 if i in active else l for i, l in enumerate(lams))
        _, q = _terms(theta, lams0, Xb, self.a, self.y, self.spec)
        g0 = Xb.T @ (q - self.y) + self.reg_C * theta
        kinks = []
        for i in active:
            s = self.sides[i]
            gap, a = _raw_gap(rho, dens, Xb, s)
            up, down = _band_edges(rho[s == ConstraintSide.GAMMA1], rho[s == ConstraintSide.GAMMA0], self.spec.rates[i])
            kinks.append(_Kink(gap, a, n * up, n * down))
        return g0, kinks

    def kink_hessian(self, theta, lams, active, nu):
        """Lagrangian Hessian with multipliers ``nu`` on the active constraints."""
        lams = list(lams)
        for i, v in zip(active, nu):
            lams[i] = v
        return self.hessian(theta, tuple(lams), skip=active)


@dataclass
class _Kink:
    gap: float
    a: np.ndarray  # gradient of the raw gap
    up: float  # slope for gap > 0
    down: float  # slope for gap < 0


def _band_edges(e1, e0, rates):
    """Largest positive and negative multipliers that clamp no example."""
    up = 1.0 / max(e1.max() / rates.p_gamma1, (1.0 - e0).max() / rates.p_gamma0)
    down = 1.0 / max(e0.max() / rates.p_gamma0, (1.0 - e1).max() / rates.p_gamma1)
    return up, down


def _raw_gap(rho, dens, Xb, s):
    g1 = s == ConstraintSide.GAMMA1
    g0 = s == ConstraintSide.GAMMA0
    gap = float(rho[g1].mean() - rho[g0].mean())
    a = Xb[g1].T @ dens[g1] / g1.sum() - Xb[g0].T @ dens[g0] / g0.sum()
    return gap, a


def _kink_penalty(kinks, lin):
    return sum(k.up * max(0.0, l) + k.down * max(0.0, -l) for k, l in zip(kinks, lin))


def _kink_step(g0, H, kinks):
    """Minimize g0.d + d'Hd/2 + sum_c (up_c l_c^+ + down_c l_c^-), l_c = gap_c + a_c.d.

    The model is convex and piecewise quadratic; every pattern of
    (positive side, negative side, on the kink) per constraint is solved and
    the best is kept.  Returns (d, model change from d = 0, multipliers),
    the multipliers in the units of up/down.
    """
    A = np.array([k.a for k in kinks])
    gaps = np.array([k.gap for k in kinks])
    Hinv_g = np.linalg.solve(H, g0)
    Hinv_A = np.linalg.solve(H, A.T)
    base = _kink_penalty(kinks, gaps)
    best = (None, np.inf, None)
    for pattern in itertools.product((1, -1, 0), repeat=len(kinks)):
        coef = np.array([k.up if p == 1 else (-k.down if p == -1 else 0.0) for k, p in zip(kinks, pattern)])
        d = -(Hinv_g + Hinv_A @ coef)
        on = [i for i, p in enumerate(pattern) if p == 0]
        if on:
            M = A[on] @ Hinv_A[:, on]
            try:
                mu = np.linalg.solve(M, gaps[on] + A[on] @ d)
            except np.linalg.LinAlgError:
                continue
            d = d - Hinv_A[:, on] @ mu
            coef[on] = mu
        val = float(g0 @ d + 0.5 * d @ H @ d) + _kink_penalty(kinks, gaps + A @ d)
        if val < best[1]:
            best = (d, val, coef)
    return best[0], best[1] - base, best[2]


def _min_subgradient(g0, kinks):
    """Smallest-norm element of g0 + sum_c nu_c a_c with nu_c in [-down_c, up_c]."""
    A = np.array([k.a for k in kinks])
    lo = np.array([-k.down for k in kinks])
    hi = np.array([k.up for k in kinks])
    best = g0
    for pattern in itertools.product((0, 1, -1), repeat=len(kinks)):
        nu = np.where(np.array(pattern) == 1, hi, lo)
        free = [i for i, p in enumerate(pattern) if p == 0]
        if free:
            fixed = [i for i in range(len(kinks)) if i not in free]
            r = g0 + A[fixed].T @ nu[fixed] if fixed else g0
            sol, *_ = np.linalg.lstsq(A[free].T, -r, rcond=None)
            if np.any(sol < lo[free]) or np.any(sol > hi[free]):
                continue
            nu[free] = sol
        cand = g0 + A.T @ nu
        if np.linalg.norm(cand) < np.linalg.norm(best):
            best = cand
    return best


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, yv in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (yv @ s)
        alpha = rho * (s @ q)
        alphas.append((rho, alpha))
        q -= alpha * yv
    if s_hist:
        q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
    for (s, yv), (rho, alpha) in zip(zip(s_hist, y_hist), reversed(alphas)):
        beta = rho * (yv @ q)
        q += (alpha - beta) * s
    return -q


def minimize(fun, theta0, config: TrainConfig):
    """Monotone L-BFGS with Armijo backtracking.

    ``fun`` returns (value, gradient, extra).  Falls back to steepest descent
    whenever the quasi-Newton direction is not a descent direction.
    """
    theta = np.array(theta0, dtype=float)
    f, g, extra = fun(theta)
    history = [f]
    s_hist, y_hist = [], []
    status = "max_iters"
    it = 0
    for it in range(1, config.max_iters + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= config.grad_tol:
            status = "grad_tol"
            it -= 1
            break
        d = _two_loop(g, s_hist, y_hist)
        slope = float(g @ d)
        if not s_hist or slope >= 0:
            s_hist.clear()
            y_hist.clear()
            d = -g * (config.initial_step / max(1.0, float(np.linalg.norm(g))))
            slope = float(g @ d)

        step = 1.0
        for _ in range(config.max_backtracks):
            cand = theta + step * d
            f_new, g_new, extra_new = fun(cand)
            if f_new <= f + config.armijo * step * slope:
                break
            step *= config.backtrack
        else:
            status = "line_search"
            break

        s = cand - theta
        yv = g_new - g
        if s @ yv > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > config.memory:
                s_hist.pop(0)
                y_hist.pop(0)

        decrease = f - f_new
        theta, f, g, extra = cand, f_new, g_new, extra_new
        history.append(f)
        if decrease <= config.objective_tol * max(1.0, abs(f)):
            status = "objective_tol"
            break
    return theta, f, g, extra, {"status": status, "iterations": it, "history": history}


def newton(fun, theta0, config: TrainConfig):
    """Damped Newton with Armijo backtracking; ``fun`` also provides ``hessian``.

    When ``fun`` exposes kink helpers, constraints sitting at (or about to
    cross) a zero raw gap get a step from the piecewise model instead, and
    stationarity there is measured by the smallest nearby subgradient.
    """
    theta = np.array(theta0, dtype=float)
    f, g, extra = fun(theta)
    history = [f]
    status = "max_iters"
    crit = float(np.max(np.abs(g)))
    kinked = hasattr(fun, "kink_model")
    it = 0
    for it in range(1, config.max_iters + 1):
        H = fun.hessian(theta, extra)
        # tiny ridge keeps the solve well posed when C = 0 and features are collinear
        ridge = 1e-12 * max(1.0, float(np.max(np.diag(H))))
        H[np.diag_indices_from(H)] += ridge
        d = _newton_direction(H, g)
        slope = float(g @ d)
        if not np.all(np.isfinite(d)) or slope >= 0:
            d = -g / max(1.0, float(np.linalg.norm(g)))
            slope = float(g @ d)
        candidates = [(d, slope)]

        crit = float(np.max(np.abs(g)))
        active = fun.kink_candidates(theta, extra) if kinked else []
        if active:
            g0, kinks = fun.kink_model(theta, extra, active)
            if all(abs(k.gap) <= KINK_GAP_TOL for k in kinks):
                crit = min(crit, float(np.max(np.abs(_min_subgradient(g0, kinks)))))
            n = len(fun.y)
            try:
                # first pass for the multipliers, second with their curvature
                nu = np.zeros(len(active))
                for _ in range(2):
                    H0 = fun.kink_hessian(theta, extra, active, nu)
                    H0[np.diag_indices_from(H0)] += ridge
                    dk, pred, coef = _kink_step(g0, H0, kinks)
                    if dk is None:
                        break
                    nu = coef / n
                if dk is not None and pred < 0:
                    candidates.insert(0, (dk, pred))
            except np.linalg.LinAlgError:
                pass
        if crit <= config.grad_tol:
            status = "grad_tol"
            it -= 1
            break

        for d, slope in candidates:
            step = config.initial_step
            for _ in range(config.max_backtracks):
                cand = theta + step * d
                f_new, g_new, extra_new = fun(cand)
                if f_new <= f + config.armijo * step * slope:
                    break
                step *= config.backtrack
            else:
                continue
            break
        else:
            status = "line_search"
            break

        decrease = f - f_new
        theta, f, g, extra = cand, f_new, g_new, extra_new
        history.append(f)
        # full steps are still converging; only a stalled line search stops here
        if step < config.initial_step and decrease <= config.objective_tol * max(1.0, abs(f)):
            status = "objective_tol"
            crit = float(np.max(np.abs(g)))
            break
    return theta, f, g, extra, {
        "status": status, "iterations": it, "history": history, "stationarity": crit,
    }


def _newton_direction(H, g):
    try:
        return -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def train(dataset, kind, config: TrainConfig | None = None) -> Model:
    """Fit theta from zero; ``kind=None`` trains plain L2 logistic regression."""
    config = config or TrainConfig()
    kind = CriterionKind.parse(kind)
    spec = empirical_rates(dataset, kind)
    problem = _Problem(dataset, spec, config.reg_C)
    theta0 = np.zeros(problem.Xb.shape[1])
    optimizer = newton if config.method == "newton" else minimize
    theta, f, g, _, info = optimizer(problem, theta0, config)

    lambdas = solve_lambdas(theta, dataset, spec, problem.Xb)
    gaps = constraint_gaps(theta, lambdas, dataset, spec)
    diagnostics = {
        "objective": f,
        "grad_inf_norm": float(info.get("stationarity", np.max(np.abs(g)))),
        "iterations": info["iterations"],
        "status": info["status"],
        "function_evals": problem.n_evals,
        "train_gaps": gaps,
        "objective_history": info["history"],
    }
    log.info(
        "trained %s: objective=%.6f |g|=%.2e iters=%d (%s) lambdas=%s",
        kind.value if kind else "unconstrained",
        f, diagnostics["grad_inf_norm"], info["iterations"], info["status"], lambdas,
    )
    return Model(
        theta=theta,
        lambdas=lambdas,
        spec=spec,
        feature_names=list(getattr(dataset, "feature_names", []) or []),
        config=config,
        diagnostics=diagnostics,
    )

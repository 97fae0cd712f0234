"""Reference implementations used only by the tests.

Nothing here imports the solver or training code it is checking.
"""
import numpy as np
from scipy import optimize


def clamped_gap(e1, e0, p1, p0, lam):
    """Mean difference of the clamped group probabilities at ``lam``."""
    e1, e0 = np.asarray(e1, float), np.asarray(e0, float)
    if lam > 0:
        m1 = np.minimum(e1, p1 / lam).mean()
        m0 = np.maximum(e0, 1 - p0 / lam).mean()
    elif lam < 0:
        m1 = np.maximum(e1, 1 + p1 / lam).mean()
        m0 = np.minimum(e0, -p0 / lam).mean()
    else:
        m1, m0 = e1.mean(), e0.mean()
    return m1 - m0


def bisect_lambda(e1, e0, p1, p0, iters=200):
    """Root of the clamped gap in lam by bracketing and bisection."""
    g = clamped_gap(e1, e0, p1, p0, 0.0)
    if g == 0:
        return 0.0
    sign = 1.0 if g > 0 else -1.0
    lo, hi = 0.0, 1.0
    while sign * clamped_gap(e1, e0, p1, p0, sign * hi) > 0:
        lo, hi = hi, 2 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if sign * clamped_gap(e1, e0, p1, p0, sign * mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return sign * 0.5 * (lo + hi)


def logistic_regression(X, y, reg_C, gtol=1e-12):
    """L2 logistic regression with a bias column, solved by scipy trust-region Newton."""
    Xb = np.column_stack([X, np.ones(len(X))])
    y = np.asarray(y, float)

    def f(w):
        s = Xb @ w
        return np.sum(np.logaddexp(0, s) - y * s) + 0.5 * reg_C * w @ w

    def g(w):
        p = 0.5 * (1 + np.tanh(0.5 * (Xb @ w)))
        return Xb.T @ (p - y) + reg_C * w

    def h(w):
        p = 0.5 * (1 + np.tanh(0.5 * (Xb @ w)))
        return (Xb * (p * (1 - p))[:, None]).T @ Xb + reg_C * np.eye(Xb.shape[1])

    res = optimize.minimize(
        f, np.zeros(Xb.shape[1]), jac=g, hess=h, method="trust-exact", options={"gtol": gtol}
    )
    return res.x, 0.5 * (1 + np.tanh(0.5 * (Xb @ res.x)))


def fair_kl_oracle(weights, pi, a):
    """Smallest expected KL(pi || p) over cell probabilities p with equal group means.

    ``weights`` is the population mass of each (x, a) cell and ``pi`` its true
    P(y=1).  For a fixed common positive rate r each group is solved through
    its one-dimensional dual; r itself is found by golden-section search.
    """
    weights, pi, a = np.asarray(weights, float), np.asarray(pi, float), np.asarray(a)

    def kl(p):
        return float(np.sum(weights * (pi * np.log(pi / p) + (1 - pi) * np.log((1 - pi) / (1 - p)))))

    def group_best(idx, r):
        v = weights[idx] / weights[idx].sum()

        def p_of(mu):
            # stationarity: w (p - pi) = mu v p (1 - p), i.e. c p^2 + (1 - c) p - pi = 0
            c = mu * v / weights[idx]
            out = np.empty_like(c)
            for i, (ci, pii) in enumerate(zip(c, pi[idx])):
                if abs(ci) < 1e-14:
                    out[i] = pii
                    continue
                disc = np.sqrt((1 - ci) ** 2 + 4 * ci * pii)
                roots = [(-(1 - ci) + disc) / (2 * ci), (-(1 - ci) - disc) / (2 * ci)]
                out[i] = [x for x in roots if 0 < x < 1][0]
            return out

        lo, hi = -1e6, 1e6
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if v @ p_of(mid) < r:
                lo = mid
            else:
                hi = mid
        return p_of(0.5 * (lo + hi))

    def at_rate(r):
        p = np.empty(len(pi))
        for grp in (0, 1):
            idx = np.where(a == grp)[0]
            p[idx] = group_best(idx, r)
        return kl(p), p

    lo, hi = 1e-6, 1 - 1e-6
    gr = (np.sqrt(5) - 1) / 2
    for _ in range(100):
        c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
        if at_rate(c)[0] < at_rate(d)[0]:
            hi = d
        else:
            lo = c
    return at_rate(0.5 * (lo + hi))


def population_dataset(seed=3, n_x=4, denom=1000):
    """Replicated rows realizing a discrete population over (x, a, y) exactly.

    Features are a one-hot code of the (x, a) cell.  Returns
    (X, a, y, cell_features, cell_a, cell_weight, cell_pi).
    """
    rng = np.random.default_rng(seed)
    cells = [(x, g) for x in range(n_x) for g in (0, 1)]
    k = len(cells)
    counts = np.maximum(np.round(rng.dirichlet(np.ones(k) * 3) * denom).astype(int), 4)
    pi = rng.uniform(0.1, 0.9, k)
    pos = np.clip(np.round(pi * counts).astype(int), 1, counts - 1)
    pi = pos / counts
    eye = np.eye(k)
    X, A, Y = [], [], []
    for j, (_, g) in enumerate(cells):
        for yv, c in ((1, pos[j]), (0, counts[j] - pos[j])):
            X += [eye[j]] * c
            A += [g] * c
            Y += [yv] * c
    cell_a = np.array([g for _, g in cells])
    return np.array(X), np.array(A), np.array(Y), eye, cell_a, counts / counts.sum(), pi

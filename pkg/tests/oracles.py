"""Independent reference computations used to cross-check the package.

Each oracle is written directly from its defining formula with plain numpy or
scipy and shares no code with ``dmlkit``.
"""

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm


def soft_threshold(z, lam):
    return np.sign(z) * max(abs(z) - lam, 0.0)


def standardize(x):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / sd, mu, sd


def lasso_objective_minimizer(x, y, lam):
    """Lasso on standardized columns via a bound-constrained smooth reformulation.

    beta = u - v with u, v >= 0 turns the l1 term into a linear one.
    Returns slopes on the standardized scale.
    """
    xs, _, _ = standardize(x)
    yc = y - y.mean()
    n, p = xs.shape

    def f(w):
        b = w[:p] - w[p:]
        r = yc - xs @ b
        val = 0.5 * r @ r / n + lam * w.sum()
        g = -xs.T @ r / n
        return val, np.concatenate([g + lam, -g + lam])

    res = minimize(f, np.zeros(2 * p), jac=True, method="L-BFGS-B",
                   bounds=[(0, None)] * (2 * p), options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000})
    return res.x[:p] - res.x[p:]


def dml2_theta(psi_a, psi_b):
    sa = 0.0
    sb = 0.0
    for a, b in zip(psi_a, psi_b):
        sa += a
        sb += b
    return -sb / sa


def dml1_theta(psi_a, psi_b, folds):
    thetas = [-sum(psi_b[i] for i in f) / sum(psi_a[i] for i in f) for f in folds]
    return sum(thetas) / len(thetas)


def sandwich_se(psi_a, psi_b, theta):
    n = len(psi_a)
    j0 = sum(psi_a) / n
    m2 = sum((a * theta + b) ** 2 for a, b in zip(psi_a, psi_b)) / n
    return (m2 / j0 ** 2 / n) ** 0.5


def holm(p):
    """Holm step-down with the monotone max-accumulation, written as nested loops."""
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adj = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[i]))
        adj[i] = running
    return adj


def romano_wolf(t_obs, boot_t):
    """Step-down adjusted p-values from the max-|t| bootstrap distribution.

    ``boot_t`` has shape (B, m).  Hypotheses are visited in decreasing |t|;
    step s uses the max over the not-yet-visited hypotheses.
    """
    t_abs = [abs(v) for v in t_obs]
    m = len(t_abs)
    B = len(boot_t)
    order = sorted(range(m), key=lambda j: -t_abs[j])
    adj = [0.0] * m
    prev = 0.0
    for s, j in enumerate(order):
        remaining = order[s:]
        count = 0
        for b in range(B):
            mx = max(abs(boot_t[b][k]) for k in remaining)
            if mx >= t_abs[j]:
                count += 1
        val = max(prev, count / B)
        adj[j] = val
        prev = val
    return adj


def normal_two_sided_p(t):
    return 2.0 * norm.sf(abs(t))

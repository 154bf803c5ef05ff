"""Simulated data sets with known causal parameters and nuisance functions.

Every generator returns a :class:`DgpSample`: the data, the true parameter
vector, and the true nuisance functions evaluated at the sample (keyed by
the score argument names, e.g. ``l_hat``, ``m_hat``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import expit
from scipy.stats import norm

from .dataset import Dataset
from .errors import ConfigError


@dataclass(frozen=True)
class DgpSample:
    dataset: Dataset
    theta_true: np.ndarray
    oracle: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.asarray(self.theta_true).shape[0] != self.dataset.n_treat:
            raise ConfigError("theta_true must have one entry per treatment")


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def toeplitz_cov(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@lru_cache(maxsize=32)
def _toeplitz_chol(dim: int, rho: float) -> np.ndarray:
    chol = np.linalg.cholesky(toeplitz_cov(dim, rho))
    chol.setflags(write=False)
    return chol


def toeplitz_normal(rng, n: int, dim: int, rho: float) -> np.ndarray:
    """n draws from N(0, S) with S_jk = rho^|j-k|."""
    return rng.standard_normal((n, dim)) @ _toeplitz_chol(dim, float(rho)).T


def _names(prefix, k):
    return [f"{prefix}{j}" for j in range(1, k + 1)]


def _inv_sq(dim):
    return 1.0 / np.arange(1, dim + 1) ** 2


# -- partially linear regression ----------------------------------------------

def gen_plr_ccddhnr2018(theta: float = 0.5, n_obs: int = 500, dim_x: int = 20,
                        seed: int = 0) -> DgpSample:
    """PLR design with nonlinear nuisances in x1 and x3 (Toeplitz 0.7 covariates).

    m0(x) = x1 + logistic(x3) / 4, g0(x) = logistic(x1) + x3 / 4,
    d = m0(x) + v, y = theta d + g0(x) + zeta, v, zeta ~ N(0, 1).
    """
    if n_obs < 1 or dim_x < 3:
        raise ConfigError("plr_ccddhnr2018 needs n_obs >= 1 and dim_x >= 3")
    rng = _rng(seed)
    x = toeplitz_normal(rng, n_obs, dim_x, 0.7)
    v = rng.standard_normal(n_obs)
    zeta = rng.standard_normal(n_obs)
    m0 = x[:, 0] + 0.25 * expit(x[:, 2])
    g0 = expit(x[:, 0]) + 0.25 * x[:, 2]
    d = m0 + v
    y = theta * d + g0 + zeta
    ds = Dataset.from_matrix(np.column_stack([y, d, x]), ["y", "d"] + _names("X", dim_x),
                             "y", ["d"])
    oracle = {"m_hat": m0, "l_hat": theta * m0 + g0, "g_hat": g0}
    return DgpSample(ds, np.array([theta]), oracle, {"theta": theta})


def gen_pliv_chs(theta: float = 0.5, n_obs: int = 500, dim_x: int = 20, dim_z: int = 1,
                 delta: float = 1.0, seed: int = 0) -> DgpSample:
    """PLIV design: z = Pi x + zeta, d = x'gamma + z'delta + u, y = theta d + x'beta + eps.

    corr(eps, u) = 0.6, zeta ~ N(0, 0.25 I), x Toeplitz 0.5, beta = gamma = 1/j^2,
    Pi = (I, 0).  ``delta`` is a scalar applied to every instrument.
    """
    if not 1 <= dim_z <= dim_x:
        raise ConfigError("pliv_chs needs 1 <= dim_z <= dim_x")
    rng = _rng(seed)
    cov_eu = np.array([[1.0, 0.6], [0.6, 1.0]])
    eu = rng.standard_normal((n_obs, 2)) @ np.linalg.cholesky(cov_eu).T
    eps, u = eu[:, 0], eu[:, 1]
    zeta = 0.5 * rng.standard_normal((n_obs, dim_z))
    x = toeplitz_normal(rng, n_obs, dim_x, 0.5)
    beta = _inv_sq(dim_x)
    gamma = beta
    delta_vec = np.full(dim_z, float(delta))
    z = x[:, :dim_z] + zeta
    d = x @ gamma + z @ delta_vec + u
    y = theta * d + x @ beta + eps
    z_names = _names("Z", dim_z)
    ds = Dataset.from_matrix(np.column_stack([y, d, x, z]),
                             ["y", "d"] + _names("X", dim_x) + z_names,
                             "y", ["d"], _names("X", dim_x), z_names)
    r0 = x @ gamma + x[:, :dim_z] @ delta_vec
    oracle = {"r_hat": r0, "l_hat": theta * r0 + x @ beta, "g_hat": x @ beta}
    if dim_z == 1:
        oracle["m_hat"] = x[:, 0].copy()
    return DgpSample(ds, np.array([theta]), oracle, {"theta": theta, "delta": delta})


# -- interactive regression ---------------------------------------------------

def irm_constants(dim_x: int, r2_y: float, r2_d: float):
    """(c_y, c_d, beta' Sigma beta) of the IRM design."""
    beta = _inv_sq(dim_x)
    bsb = float(beta @ toeplitz_cov(dim_x, 0.5) @ beta)
    c_y = np.sqrt(r2_y / ((1.0 - r2_y) * bsb))
    c_d = np.sqrt((np.pi ** 2 / 3.0) * r2_d / ((1.0 - r2_d) * bsb))
    return c_y, c_d, bsb


def irm_atte_true(theta: float, dim_x: int = 20, r2_y: float = 0.5, r2_d: float = 0.5) -> float:
    """theta + c_y E[x'beta | D = 1], by one-dimensional quadrature over x'beta ~ N(0, s^2)."""
    c_y, c_d, bsb = irm_constants(dim_x, r2_y, r2_d)
    s = np.sqrt(bsb)
    num = integrate.quad(lambda t: t * expit(c_d * t) * norm.pdf(t, scale=s), -np.inf, np.inf,
                         epsabs=1e-13)[0]
    den = integrate.quad(lambda t: expit(c_d * t) * norm.pdf(t, scale=s), -np.inf, np.inf,
                         epsabs=1e-13)[0]
    return theta + c_y * num / den


def gen_irm_belloni(theta: float = 0.5, n_obs: int = 1000, dim_x: int = 20, r2_y: float = 0.5,
                    r2_d: float = 0.5, seed: int = 0) -> DgpSample:
    """Binary treatment with logistic propensity; the outcome equation as printed:
    y = theta d + c_y x'beta d + zeta.  The ATE is theta."""
    if not (0 < r2_y < 1 and 0 < r2_d < 1):
        raise ConfigError("r2_y and r2_d must lie in (0, 1)")
    c_y, c_d, _ = irm_constants(dim_x, r2_y, r2_d)
    rng = _rng(seed)
    x = toeplitz_normal(rng, n_obs, dim_x, 0.5)
    v = rng.uniform(size=n_obs)
    zeta = rng.standard_normal(n_obs)
    xb = x @ _inv_sq(dim_x)
    m0 = expit(c_d * xb)
    d = (m0 > v).astype(np.float64)
    y = theta * d + c_y * xb * d + zeta
    ds = Dataset.from_matrix(np.column_stack([y, d, x]), ["y", "d"] + _names("X", dim_x),
                             "y", ["d"])
    oracle = {"m_hat": m0, "g0_hat": np.zeros(n_obs), "g1_hat": theta + c_y * xb,
              "p_hat": 0.5}
    params = {"theta": theta, "c_y": c_y, "c_d": c_d,
              "atte": irm_atte_true(theta, dim_x, r2_y, r2_d)}
    return DgpSample(ds, np.array([theta]), oracle, params)


def gen_iivm(theta: float = 0.5, n_obs: int = 1000, dim_x: int = 20, alpha_x: float = 1.0,
             seed: int = 0) -> DgpSample:
    """Binary instrument Z ~ Bern(0.5), d = 1{alpha_x Z + v > 0}, y = theta d + x'beta + u.

    corr(u, v) = 0.3; beta_j = 1/j^2; the LATE equals theta.
    """
    rng = _rng(seed)
    x = toeplitz_normal(rng, n_obs, dim_x, 0.5)
    uv = rng.standard_normal((n_obs, 2)) @ np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 1.0]])).T
    u, v = uv[:, 0], uv[:, 1]
    z = rng.binomial(1, 0.5, size=n_obs).astype(np.float64)
    d = (alpha_x * z + v > 0).astype(np.float64)
    xb = x @ _inv_sq(dim_x)
    y = theta * d + xb + u
    ds = Dataset.from_matrix(np.column_stack([y, d, x, z]),
                             ["y", "d"] + _names("X", dim_x) + ["z"],
                             "y", ["d"], _names("X", dim_x), ["z"])
    r0 = norm.cdf(0.0)
    r1 = norm.cdf(alpha_x)
    oracle = {"m_hat": np.full(n_obs, 0.5), "r0_hat": np.full(n_obs, r0),
              "r1_hat": np.full(n_obs, r1), "g0_hat": theta * r0 + xb, "g1_hat": theta * r1 + xb}
    return DgpSample(ds, np.array([theta]), oracle, {"theta": theta, "alpha_x": alpha_x})


# -- many treatments ------------------------------------------------------------

def gen_sparse_plr(n_obs: int = 500, n_vars: int = 100, theta_vec=(3.0, 3.0, 3.0),
                   n_treat: int = 10, seed: int = 0) -> DgpSample:
    """y = X[:, :k] theta + N(0, 1) with iid N(0, 1) regressors; X1..X{n_treat} are treatments."""
    theta_vec = np.asarray(theta_vec, dtype=np.float64)
    if theta_vec.size > n_vars or n_treat > n_vars:
        raise ConfigError("sparse_plr needs len(theta_vec) <= n_vars and n_treat <= n_vars")
    rng = _rng(seed)
    x = rng.standard_normal((n_obs, n_vars))
    y = x[:, :theta_vec.size] @ theta_vec + rng.standard_normal(n_obs)
    names = _names("X", n_vars)
    ds = Dataset.from_matrix(np.column_stack([y, x]), ["y"] + names, "y", names[:n_treat])
    coef = np.zeros(n_vars)
    coef[:theta_vec.size] = theta_vec
    return DgpSample(ds, coef[:n_treat].copy(), {}, {"theta_vec": theta_vec.tolist()})


COEF_RULES = ("as_printed", "max_variant")


def multi_treatment_coefs(p1: int = 42, s: int = 12, theta_max: float = 9.0,
                          theta_min: float = 0.75, a: float = 0.99,
                          coef_rule: str = "as_printed") -> np.ndarray:
    """theta_j = min(theta_max / j^a, theta_min) for j <= s (as printed), 0 beyond s.

    ``coef_rule="max_variant"`` uses max(...) instead.
    """
    if coef_rule not in COEF_RULES:
        raise ConfigError(f"coef_rule must be one of {COEF_RULES}")
    if not 0 <= s <= p1:
        raise ConfigError("multi_treatment needs 0 <= s <= p1")
    j = np.arange(1, s + 1, dtype=np.float64)
    decay = theta_max / j ** a
    head = np.minimum(decay, theta_min) if coef_rule == "as_printed" else np.maximum(decay, theta_min)
    theta = np.zeros(p1)
    theta[:s] = head
    return theta


def gen_multi_treatment(n_obs: int = 1000, p1: int = 42, s: int = 12, theta_max: float = 9.0,
                        theta_min: float = 0.75, a: float = 0.99, sigma2: float = 3.0,
                        coef_rule: str = "as_printed", seed: int = 0) -> DgpSample:
    """y = d'theta + eps with d ~ N(0, Toeplitz 0.5), eps ~ N(0, sigma2); all columns are treatments."""
    theta = multi_treatment_coefs(p1, s, theta_max, theta_min, a, coef_rule)
    rng = _rng(seed)
    d = toeplitz_normal(rng, n_obs, p1, 0.5)
    y = d @ theta + np.sqrt(sigma2) * rng.standard_normal(n_obs)
    names = _names("D", p1)
    ds = Dataset.from_matrix(np.column_stack([y, d]), ["y"] + names, "y", names)
    return DgpSample(ds, theta, {}, {"coef_rule": coef_rule, "sigma2": sigma2})


DGPS = {
    "plr_ccddhnr2018": gen_plr_ccddhnr2018,
    "pliv_chs": gen_pliv_chs,
    "irm_belloni": gen_irm_belloni,
    "iivm": gen_iivm,
    "sparse_plr": gen_sparse_plr,
    "multi_treatment": gen_multi_treatment,
}

# model each DGP is meant for (used as the CLI default)
DGP_MODEL = {"plr_ccddhnr2018": "plr", "pliv_chs": "pliv", "irm_belloni": "irm", "iivm": "iivm",
             "sparse_plr": "plr", "multi_treatment": "plr"}


def generate(name: str, seed: int = 0, **params) -> DgpSample:
    try:
        gen = DGPS[name]
    except KeyError:
        raise ConfigError(f"unknown DGP {name!r}; choose from {sorted(DGPS)}") from None
    try:
        return gen(seed=seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for DGP {name!r}: {exc}") from None

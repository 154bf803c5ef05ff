"""Multiplier bootstrap, simultaneous confidence bands and p-value adjustment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BootstrapNotRun, ConfigError, FitNotRun, InvalidLevel, InvalidPValue
from .resampling import derive_seed, substream

BOOT_METHODS = ("normal", "wild", "exponential")
ADJUST_METHODS = ("romano-wolf", "bonferroni", "holm")
MIN_JOINT_DRAWS = 100


def draw_weights(method: str, n_obs: int, n_boot: int, seed: int = 0) -> np.ndarray:
    """Mean-zero, unit-variance multiplier weights of shape (n_boot, n_obs).

    Row b comes from its own substream keyed by (seed, b).
    """
    if n_boot < 1:
        raise ConfigError(f"number of bootstrap draws must be >= 1, got {n_boot}")
    if method not in BOOT_METHODS:
        raise ConfigError(f"unknown bootstrap method {method!r}; choose from {BOOT_METHODS}")
    out = np.empty((n_boot, n_obs))
    for b in range(n_boot):
        rng = substream(seed, b)
        if method == "normal":
            out[b] = rng.standard_normal(n_obs)
        elif method == "wild":
            v = rng.standard_normal(n_obs)
            w = rng.standard_normal(n_obs)
            out[b] = v / np.sqrt(2.0) + (w * w - 1.0) / 2.0
        else:
            out[b] = rng.standard_exponential(n_obs) - 1.0
    return out


@dataclass
class BootstrapResult:
    """Bootstrap draws, one row per (repetition, draw), stacked repetition-major.

    ``boot_coefs`` are on the scale of the estimation error theta_hat - theta,
    i.e. sum_i xi_i psi_i / (N J0); ``boot_t_stats = boot_coefs / se``.
    """

    boot_coefs: np.ndarray   # (n_rep * B, n_treat)
    boot_t_stats: np.ndarray  # (n_rep * B, n_treat)
    method: str
    B: int

    @property
    def n_draws(self) -> int:
        return self.boot_t_stats.shape[0]


def multiplier_bootstrap(fit, method: str = "normal", n_boot: int = 500, seed: int = 0,
                         weights: Optional[np.ndarray] = None) -> BootstrapResult:
    """Perturb the fitted scores with multiplier weights; nothing is re-estimated.

    The same weight vector multiplies every treatment's score within a
    draw, which keeps the cross-treatment dependence needed for joint
    inference.  ``weights`` (shape (B, n_obs)) overrides the random draw.
    """
    if fit is None or getattr(fit, "panel", None) is None:
        raise FitNotRun("fit the model before bootstrapping")
    panel = fit.panel
    n_obs, n_rep, n_treat = panel.shape
    n = fit.n_scored
    coefs, tstats = [], []
    for r in range(n_rep):
        if weights is None:
            xi = draw_weights(method, n_obs, n_boot, seed=derive_seed(seed, r))
        else:
            xi = np.asarray(weights, dtype=np.float64)
            if xi.shape[1] != n_obs:
                raise ConfigError(f"weights need {n_obs} columns, got {xi.shape[1]}")
        psi = panel.psi_a[:, r, :] * fit.per_rep_coefs[r] + panel.psi_b[:, r, :]
        bc = (xi @ psi) / (n * fit.J0_hat[r])
        coefs.append(bc)
        tstats.append(bc / fit.per_rep_ses[r])
    boot_coefs = np.vstack(coefs)
    boot_t = np.vstack(tstats)
    return BootstrapResult(boot_coefs, boot_t, method, boot_coefs.shape[0] // n_rep)


def _require(boot):
    if boot is None:
        raise BootstrapNotRun("run the multiplier bootstrap first")
    return boot


def joint_critical_value(boot: BootstrapResult, level: float) -> float:
    if not 0 < level < 1:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    max_t = np.max(np.abs(boot.boot_t_stats), axis=1)
    return float(np.quantile(max_t, level))


def joint_confint(fit, boot: BootstrapResult, level: float = 0.95) -> np.ndarray:
    """Simultaneous intervals coef +/- c se with c the level-quantile of max_j |t*_j|."""
    boot = _require(boot)
    if boot.n_draws < MIN_JOINT_DRAWS:
        raise ConfigError(f"joint intervals need >= {MIN_JOINT_DRAWS} bootstrap draws, "
                          f"got {boot.n_draws}")
    c = joint_critical_value(boot, level)
    return np.column_stack([fit.coef - c * fit.se, fit.coef + c * fit.se])


@dataclass(frozen=True)
class AdjustedPvals:
    raw: np.ndarray
    adjusted: np.ndarray
    method: str


def p_adjust_romano_wolf(fit, boot: BootstrapResult) -> AdjustedPvals:
    """Romano-Wolf stepdown adjusted p-values from the bootstrap t-statistics."""
    boot = _require(boot)
    t_abs = np.abs(np.asarray(fit.t_stat, dtype=np.float64))
    t_star = np.abs(boot.boot_t_stats)
    n_draws = t_star.shape[0]
    raw = np.mean(t_star >= t_abs[None, :], axis=0)
    order = np.argsort(-t_abs, kind="stable")
    adj_sorted = np.empty(order.size)
    for r, j in enumerate(order):
        max_rest = np.max(t_star[:, order[r:]], axis=1)
        adj_sorted[r] = np.count_nonzero(max_rest >= t_abs[j]) / n_draws
    adj_sorted = np.maximum.accumulate(adj_sorted)
    adjusted = np.empty_like(adj_sorted)
    adjusted[order] = adj_sorted
    return AdjustedPvals(raw, adjusted, "romano-wolf")


def p_adjust_classical(raw_pvals, method: str = "bonferroni") -> AdjustedPvals:
    raw = np.asarray(raw_pvals, dtype=np.float64).ravel()
    if np.any(~np.isfinite(raw)) or np.any((raw < 0) | (raw > 1)):
        raise InvalidPValue("raw p-values must lie in [0, 1]")
    m = raw.size
    if method == "bonferroni":
        adjusted = np.minimum(1.0, m * raw)
    elif method == "holm":
        order = np.argsort(raw, kind="stable")
        factors = m - np.arange(m)
        stepped = np.minimum(1.0, np.maximum.accumulate(factors * raw[order]))
        adjusted = np.empty(m)
        adjusted[order] = stepped
    else:
        raise ConfigError(f"unknown p-value adjustment {method!r}; choose from {ADJUST_METHODS}")
    return AdjustedPvals(raw, adjusted, method)

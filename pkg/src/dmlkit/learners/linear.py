"""Linear and logistic nuisance learners.

Penalized fits (ridge, lasso, logistic) work on columns centered and scaled
by their (1/n) standard deviation, so that x_j'x_j / n = 1, and report
coefficients on the original scale.  Zero-variance columns get a zero
coefficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NonConvergence, SeparationDetected, SingularDesign
from ..resampling import draw_folds
from . import _kernels

LASSO_TOL = 1e-7
LASSO_MAX_ITER = 100_000
N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-3
MAX_PATH_R2 = 0.999  # CV paths stop once the training fit is saturated


# -- predictors ------------------------------------------------------------

@dataclass(frozen=True)
class LinearPredictor:
    intercept: float
    coef: np.ndarray

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.coef.size == 0:
            return np.full(x.shape[0], self.intercept)
        return x @ self.coef + self.intercept


@dataclass(frozen=True)
class LogisticPredictor:
    intercept: float
    coef: np.ndarray
    clip_eps: float = 0.01

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.coef.size == 0:
            return np.full(x.shape[0], self.intercept)
        return x @ self.coef + self.intercept

    def predict(self, x) -> np.ndarray:
        prob = _expit(self.decision_function(x))
        return np.clip(prob, self.clip_eps, 1.0 - self.clip_eps)


@dataclass(frozen=True)
class ConstantPredictor:
    value: float

    def predict(self, x) -> np.ndarray:
        return np.full(np.asarray(x).shape[0], self.value)


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


# -- helpers ---------------------------------------------------------------

@dataclass(frozen=True)
class _Scaling:
    mean: np.ndarray
    scale: np.ndarray  # 0 for dropped (constant) columns
    keep: np.ndarray


def _standardize(x):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(keep, sd, 1.0)
    xs = (x - mean) / scale
    xs[:, ~keep] = 0.0
    return xs, _Scaling(mean, np.where(keep, sd, 0.0), keep)


def _unscale(scaling: _Scaling, beta_std, y_mean):
    coef = np.zeros_like(beta_std)
    k = scaling.keep
    coef[k] = beta_std[k] / scaling.scale[k]
    intercept = y_mean - scaling.mean @ coef
    return float(intercept), coef


def _as_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ConfigError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    return x, y


# -- OLS / ridge -----------------------------------------------------------

def fit_ols(x, y) -> LinearPredictor:
    """Least squares with an intercept; raises SingularDesign when rank deficient."""
    x, y = _as_xy(x, y)
    n, p = x.shape
    if p == 0:
        return LinearPredictor(float(y.mean()), np.zeros(0))
    design = np.column_stack([np.ones(n), x])
    sol, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    if rank < p + 1:
        raise SingularDesign(f"design matrix has rank {rank} < {p + 1} columns (incl. intercept)")
    return LinearPredictor(float(sol[0]), sol[1:])


def fit_ridge(x, y, lam: float) -> LinearPredictor:
    """Solves (X'X + lam * n * I) b = X'y on standardized columns."""
    if not lam > 0:
        raise ConfigError(f"ridge penalty must be positive, got {lam}")
    x, y = _as_xy(x, y)
    n, p = x.shape
    y_mean = y.mean()
    if p == 0:
        return LinearPredictor(float(y_mean), np.zeros(0))
    xs, scaling = _standardize(x)
    k = scaling.keep
    beta = np.zeros(p)
    if k.any():
        xk = xs[:, k]
        lhs = xk.T @ xk + lam * n * np.eye(int(k.sum()))
        beta[k] = np.linalg.solve(lhs, xk.T @ (y - y_mean))
    return LinearPredictor(*_unscale(scaling, beta, y_mean))


# -- lasso -----------------------------------------------------------------

@dataclass(frozen=True)
class LassoPredictor(LinearPredictor):
    lam: float = 0.0
    std_coef: np.ndarray = None
    cv_lambdas: np.ndarray = None
    cv_mse: np.ndarray = None


def _lasso_path_std(xs, yc, lambdas, tol, max_iter, max_r2=None):
    """Warm-started solutions along ``lambdas`` (descending).

    With ``max_r2`` set the path is truncated, so the returned array may have
    fewer rows than ``lambdas``: it stops once the in-sample R^2 reaches
    ``max_r2``, or before the first penalty whose solve hits ``max_iter``
    (NonConvergence is raised only when nothing converged).
    """
    n, p = xs.shape
    gram = xs.T @ xs / n
    xty = xs.T @ yc / n
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if max_r2 is None:
        betas, done, status, last = _kernels.lasso_gram_path(
            gram, xty, lambdas, np.zeros(p), tol, max_iter
        )
        if status != _kernels.CONVERGED:
            raise _non_convergence(max_iter, lambdas[done], last)
        return betas
    tss = float(yc @ yc) / n
    beta = np.zeros(p)
    out = []
    for lam in lambdas:
        betas, _, status, last = _kernels.lasso_gram_path(
            gram, xty, lam[None], beta, tol, max_iter
        )
        if status != _kernels.CONVERGED:
            if not out:
                raise _non_convergence(max_iter, lam, last)
            break
        beta = betas[0]
        out.append(beta)
        rss = tss - 2.0 * xty @ beta + beta @ gram @ beta
        if tss > 0 and 1.0 - rss / tss >= max_r2:
            break
    return np.array(out)


def _non_convergence(max_iter, lam, last):
    return NonConvergence(
        f"lasso coordinate descent did not converge within {max_iter} sweeps at lambda={lam:.6g}",
        last_iterate=last,
    )


def lambda_max(x, y) -> float:
    """Smallest penalty at which every lasso slope is exactly zero."""
    x, y = _as_xy(x, y)
    if x.shape[1] == 0:
        return 0.0
    xs, _ = _standardize(x)
    return float(np.max(np.abs(xs.T @ (y - y.mean()))) / x.shape[0])


def fit_lasso_cd(x, y, lam: float, tol: float = LASSO_TOL,
                 max_iter: int = LASSO_MAX_ITER) -> LassoPredictor:
    """Lasso by cyclic coordinate descent.

    Minimizes (1/2n)||y - b0 - X b||^2 + lam * ||b||_1 with the penalty applied
    to standardized coefficients; stops once no coefficient moves by more
    than ``tol`` in a full sweep.
    """
    if lam < 0:
        raise ConfigError(f"lasso penalty must be >= 0, got {lam}")
    x, y = _as_xy(x, y)
    y_mean = y.mean()
    if x.shape[1] == 0:
        return LassoPredictor(float(y_mean), np.zeros(0), lam=lam, std_coef=np.zeros(0))
    xs, scaling = _standardize(x)
    beta = _lasso_path_std(xs, y - y_mean, [lam], tol, max_iter)[0]
    intercept, coef = _unscale(scaling, beta, y_mean)
    return LassoPredictor(intercept, coef, lam=lam, std_coef=beta)


def default_lambda_grid(x, y, n_lambda=N_LAMBDA, ratio=LAMBDA_MIN_RATIO):
    lmax = lambda_max(x, y)
    return lmax * np.logspace(0.0, np.log10(ratio), n_lambda)


def fit_lasso_cv(x, y, lambda_grid=None, cv_folds: int = 5, seed: int = 0,
                 tol: float = LASSO_TOL, max_iter: int = LASSO_MAX_ITER) -> LassoPredictor:
    """Lasso with the penalty chosen by K-fold cross-validated MSE ("lambda.min").

    The grid defaults to 100 log-spaced values from lambda_max down to
    0.001 * lambda_max.  Each path stops early once its training R^2 reaches
    0.999 or at the first penalty where coordinate descent fails to converge;
    only penalties reached by every fold compete.  The final model is
    refit on all rows along the grid (warm starts) down to the selected value.
    """
    x, y = _as_xy(x, y)
    n, p = x.shape
    y_mean = float(y.mean())
    if lambda_grid is None:
        grid = default_lambda_grid(x, y)
        if not grid[0] > 0:
            return LassoPredictor(y_mean, np.zeros(p), lam=0.0, std_coef=np.zeros(p))
    else:
        grid = np.sort(np.asarray(lambda_grid, dtype=np.float64).ravel())[::-1]
        if grid.size == 0:
            raise ConfigError("lambda grid is empty")
    if p == 0:
        return LassoPredictor(y_mean, np.zeros(0), lam=float(grid[0]), std_coef=np.zeros(0))

    plan = draw_folds(n, cv_folds, 1, seed)
    sq_err = np.zeros(grid.size)
    reached = grid.size
    for train, test in plan.splits[0]:
        xtr, ytr = x[train], y[train]
        xs, scaling = _standardize(xtr)
        ym = ytr.mean()
        betas = _lasso_path_std(xs, ytr - ym, grid, tol, max_iter, MAX_PATH_R2)
        reached = min(reached, betas.shape[0])
        coefs = np.zeros_like(betas)
        k = scaling.keep
        coefs[:, k] = betas[:, k] / scaling.scale[k]
        intercepts = ym - coefs @ scaling.mean
        pred = x[test] @ coefs.T + intercepts
        sq_err[:betas.shape[0]] += ((y[test][:, None] - pred) ** 2).sum(axis=0)
    mse = sq_err[:reached] / n
    best = int(np.argmin(mse))

    xs, scaling = _standardize(x)
    betas = _lasso_path_std(xs, y - y_mean, grid[:best + 1], tol, max_iter, MAX_PATH_R2)
    lam = float(grid[betas.shape[0] - 1])
    intercept, coef = _unscale(scaling, betas[-1], y_mean)
    return LassoPredictor(intercept, coef, lam=lam, std_coef=betas[-1],
                          cv_lambdas=grid[:reached], cv_mse=mse)


# -- logistic ----------------------------------------------------------------

def _check_binary(y):
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("classification target must be coded 0/1")


def fit_logistic(x, y, l2_lambda: float = 0.0, clip_eps: float = 0.01,
                 max_iter: int = 100, tol: float = 1e-10) -> LogisticPredictor:
    """Ridge-penalized logistic regression by damped Newton steps.

    Objective: -loglik/n + (l2_lambda/2)||b||^2 on standardized columns,
    intercept unpenalized.  With ``l2_lambda == 0`` and (quasi-)separated
    classes the slopes diverge; that is reported as SeparationDetected.
    """
    if l2_lambda < 0:
        raise ConfigError(f"l2_lambda must be >= 0, got {l2_lambda}")
    x, y = _as_xy(x, y)
    _check_binary(y)
    n, p = x.shape
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        return LogisticPredictor(np.inf if ybar == 1 else -np.inf, np.zeros(p), clip_eps)
    xs, scaling = _standardize(x)
    k = scaling.keep
    design = np.column_stack([np.ones(n), xs[:, k]])
    q = design.shape[1]
    pen = np.full(q, l2_lambda)
    pen[0] = 0.0
    beta = np.zeros(q)
    beta[0] = np.log(ybar / (1 - ybar))

    def objective(b):
        eta = design @ b
        return np.mean(np.logaddexp(0.0, eta) - y * eta) + 0.5 * np.sum(pen * b * b)

    obj = objective(beta)
    converged = False
    for _ in range(max_iter):
        eta = design @ beta
        prob = _expit(eta)
        w = prob * (1 - prob)
        grad = design.T @ (prob - y) / n + pen * beta
        hess = (design * w[:, None]).T @ design / n + np.diag(pen)
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(q), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta - t * step
            cand_obj = objective(cand)
            if cand_obj <= obj + 1e-4 * t * (-grad @ step) or t < 1e-10:
                break
            t *= 0.5
        change = np.max(np.abs(cand - beta))
        beta, obj = cand, cand_obj
        if change < tol or np.max(np.abs(grad)) < tol:
            converged = True
            break
    if l2_lambda == 0:
        separated = np.all((design @ beta > 0) == (y > 0.5))
        if not converged or (separated and obj < 1e-6):
            raise SeparationDetected(
                "logistic coefficients diverge (classes are separable); "
                "use l2_lambda > 0"
            )
    elif not converged:
        warnings.warn("logistic Newton iterations hit max_iter", RuntimeWarning, stacklevel=2)
    b = np.zeros(p)
    b[k] = beta[1:]
    intercept, coef = _unscale(scaling, b, 0.0)
    return LogisticPredictor(intercept + beta[0], coef, clip_eps)


@dataclass(frozen=True)
class LogisticLassoPredictor(LogisticPredictor):
    lam: float = 0.0
    cv_lambdas: np.ndarray = None
    cv_deviance: np.ndarray = None


def _logistic_path(xs, y, grid, tol, max_outer=50, max_inner=1000):
    return _kernels.logistic_lasso_path(xs, y, np.asarray(grid, dtype=np.float64),
                                        tol, max_outer, max_inner)


def fit_logistic_lasso_cv(x, y, lambda_grid=None, cv_folds: int = 5, seed: int = 0,
                          clip_eps: float = 0.01, tol: float = 1e-6) -> LogisticPredictor:
    """L1-penalized logistic regression, penalty picked by cross-validated deviance."""
    x, y = _as_xy(x, y)
    _check_binary(y)
    n, p = x.shape
    ybar = float(y.mean())
    if ybar in (0.0, 1.0) or p == 0:
        if ybar in (0.0, 1.0):
            return LogisticPredictor(np.inf if ybar == 1 else -np.inf, np.zeros(p), clip_eps)
        return LogisticPredictor(float(np.log(ybar / (1 - ybar))), np.zeros(0), clip_eps)
    if lambda_grid is None:
        xs_full, _ = _standardize(x)
        lmax = float(np.max(np.abs(xs_full.T @ (y - ybar))) / n)
        if not lmax > 0:
            return LogisticPredictor(float(np.log(ybar / (1 - ybar))), np.zeros(p), clip_eps)
        grid = lmax * np.logspace(0.0, np.log10(LAMBDA_MIN_RATIO), N_LAMBDA)
    else:
        grid = np.sort(np.asarray(lambda_grid, dtype=np.float64).ravel())[::-1]
        if grid.size == 0:
            raise ConfigError("lambda grid is empty")

    plan = draw_folds(n, cv_folds, 1, seed)
    dev = np.zeros(grid.size)
    for train, test in plan.splits[0]:
        ytr = y[train]
        if ytr.min() == ytr.max():
            prob = np.full((test.size, grid.size), ytr[0])
        else:
            xs, scaling = _standardize(x[train])
            b0s, betas = _logistic_path(xs, ytr, grid, tol)
            k = scaling.keep
            coefs = np.zeros_like(betas)
            coefs[:, k] = betas[:, k] / scaling.scale[k]
            intercepts = b0s - coefs @ scaling.mean
            prob = _expit(x[test] @ coefs.T + intercepts)
        prob = np.clip(prob, 1e-15, 1 - 1e-15)
        yt = y[test][:, None]
        dev += -2.0 * (yt * np.log(prob) + (1 - yt) * np.log(1 - prob)).sum(axis=0)
    dev /= n
    best = int(np.argmin(dev))

    xs, scaling = _standardize(x)
    b0s, betas = _logistic_path(xs, y, grid[:best + 1], tol)
    intercept, coef = _unscale(scaling, betas[-1], 0.0)
    return LogisticLassoPredictor(intercept + b0s[-1], coef, clip_eps, lam=float(grid[best]),
                                  cv_lambdas=grid, cv_deviance=dev)

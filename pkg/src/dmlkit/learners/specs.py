"""Learner specifications: small immutable records that know how to fit themselves.

Every spec exposes ``task`` ("regression" or "classification") and
``fit(x, y, seed=0)`` returning a predictor with ``predict(x)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError
from . import forest, linear


@dataclass(frozen=True)
class Ols:
    kind = "ols"
    task = "regression"

    def fit(self, x, y, seed: int = 0):
        return linear.fit_ols(x, y)


@dataclass(frozen=True)
class Ridge:
    lam: float = 1.0
    kind = "ridge"
    task = "regression"

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"ridge lam must be > 0, got {self.lam}")

    def fit(self, x, y, seed: int = 0):
        return linear.fit_ridge(x, y, self.lam)


@dataclass(frozen=True)
class Lasso:
    lam: float = 0.1
    kind = "lasso"
    task = "regression"

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lasso lam must be >= 0, got {self.lam}")

    def fit(self, x, y, seed: int = 0):
        return linear.fit_lasso_cd(x, y, self.lam)


@dataclass(frozen=True)
class LassoCV:
    lambda_grid: Optional[Sequence[float]] = None
    cv_folds: int = 5
    kind = "lasso_cv"
    task = "regression"

    def __post_init__(self):
        _check_cv(self.cv_folds)
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
            if any(v < 0 for v in self.lambda_grid):
                raise ConfigError("lambda_grid values must be >= 0")

    def fit(self, x, y, seed: int = 0):
        return linear.fit_lasso_cv(x, y, self.lambda_grid, self.cv_folds, seed)


@dataclass(frozen=True)
class Logistic:
    l2_lambda: float = 0.0
    clip_eps: float = 0.01
    kind = "logistic"
    task = "classification"

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        _check_clip(self.clip_eps)

    def fit(self, x, y, seed: int = 0):
        return linear.fit_logistic(x, y, self.l2_lambda, self.clip_eps)


@dataclass(frozen=True)
class LogisticLassoCV:
    lambda_grid: Optional[Sequence[float]] = None
    cv_folds: int = 5
    clip_eps: float = 0.01
    kind = "logistic_lasso_cv"
    task = "classification"

    def __post_init__(self):
        _check_cv(self.cv_folds)
        _check_clip(self.clip_eps)
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))

    def fit(self, x, y, seed: int = 0):
        return linear.fit_logistic_lasso_cv(x, y, self.lambda_grid, self.cv_folds, seed,
                                            self.clip_eps)


@dataclass(frozen=True)
class RandomForest:
    num_trees: int = 100
    mtry: Optional[int] = None
    min_node_size: int = 5
    max_depth: Optional[int] = None
    task: str = "regression"
    clip_eps: float = 0.01
    kind = "random_forest"

    def __post_init__(self):
        if self.num_trees < 1:
            raise ConfigError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_node_size < 1:
            raise ConfigError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        _check_clip(self.clip_eps)

    def fit(self, x, y, seed: int = 0):
        mtry = self.mtry
        if mtry is not None:
            p = np.asarray(x).shape[1] if np.ndim(x) == 2 else 1
            mtry = min(mtry, max(p, 1))
        return forest.fit_random_forest(x, y, self.num_trees, mtry, self.min_node_size,
                                        self.max_depth, self.task, seed, self.clip_eps)


def _check_cv(k):
    if k < 2:
        raise ConfigError(f"cv_folds must be >= 2, got {k}")


def _check_clip(eps):
    if not 0 <= eps < 0.5:
        raise ConfigError(f"clip_eps must lie in [0, 0.5), got {eps}")


SPEC_KINDS = {cls.kind: cls for cls in (Ols, Ridge, Lasso, LassoCV, Logistic, LogisticLassoCV,
                                         RandomForest)}


def spec_from_dict(raw) -> object:
    """Build a spec from a mapping such as ``{"kind": "lasso", "lam": 0.1}``."""
    raw = dict(raw)
    kind = raw.pop("kind", None)
    if kind not in SPEC_KINDS:
        raise ConfigError(f"unknown learner kind {kind!r}; choose from {sorted(SPEC_KINDS)}")
    cls = SPEC_KINDS[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"learner {kind!r} has no parameter(s) {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for learner {kind!r}: {exc}") from None


def spec_to_dict(spec) -> dict:
    out = {"kind": spec.kind}
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        if v is not None:
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def for_task(spec, task: str, clip_eps: float = 0.01):
    """Adapt ``spec`` to a nuisance slot of the given task.

    Forests switch their task; classification learners take the slot's
    clipping level.  A regression-only learner in a classification slot is
    a configuration error.
    """
    if task == "regression":
        if isinstance(spec, RandomForest) and spec.task != "regression":
            return dataclasses.replace(spec, task="regression")
        if spec.task != "regression":
            raise ConfigError(f"learner {spec.kind!r} cannot fill a regression slot")
        return spec
    if isinstance(spec, RandomForest):
        return dataclasses.replace(spec, task="classification", clip_eps=clip_eps)
    if spec.task != "classification":
        raise ConfigError(
            f"learner {spec.kind!r} is regression-only; this slot needs a classifier"
        )
    return dataclasses.replace(spec, clip_eps=clip_eps)

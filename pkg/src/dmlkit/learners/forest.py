"""Bagged CART forests for regression and probability estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..resampling import substream
from . import _kernels

_UNBOUNDED_DEPTH = 1 << 30


@dataclass(frozen=True)
class ForestPredictor:
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    task: str = "regression"
    clip_eps: float = 0.01

    @property
    def num_trees(self) -> int:
        return self.feat.shape[0]

    def predict(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        pred = _kernels.predict_forest(x, self.feat, self.thr, self.left, self.right, self.value)
        if self.task == "classification":
            pred = np.clip(pred, self.clip_eps, 1.0 - self.clip_eps)
        return pred


def fit_random_forest(x, y, num_trees: int = 100, mtry=None, min_node_size: int = 5,
                      max_depth=None, task: str = "regression", seed: int = 0,
                      clip_eps: float = 0.01) -> ForestPredictor:
    """Fit ``num_trees`` CART trees, each on a bootstrap resample of the rows.

    Parameters
    ----------
    mtry : int, optional
        Features tried at each split (sampled without replacement).
        Defaults to all features.
    min_node_size : int
        Minimum number of (bootstrap) observations in a leaf.
    max_depth : int, optional
        Depth cap; ``None`` grows trees until nodes are pure or too small.
    task : {"regression", "classification"}
        Classification expects 0/1 labels; leaf values are then class-1
        proportions and predictions are clipped to ``[clip_eps, 1 - clip_eps]``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    n, p = x.shape
    if n != y.shape[0]:
        raise ConfigError(f"x has {n} rows but y has {y.shape[0]}")
    if task not in ("regression", "classification"):
        raise ConfigError(f"unknown forest task {task!r}")
    if task == "classification" and not np.all((y == 0) | (y == 1)):
        raise ConfigError("classification target must be coded 0/1")
    if num_trees < 1:
        raise ConfigError(f"num_trees must be >= 1, got {num_trees}")
    if min_node_size < 1:
        raise ConfigError(f"min_node_size must be >= 1, got {min_node_size}")
    if max_depth is not None and max_depth < 1:
        raise ConfigError(f"max_depth must be >= 1, got {max_depth}")
    if mtry is None:
        mtry = max(p, 1)
    if p > 0 and not 1 <= mtry <= p:
        raise ConfigError(f"mtry must lie in [1, {p}], got {mtry}")

    rng = substream(seed, 0)
    boot = rng.integers(0, n, size=(num_trees, n))
    tree_seeds = rng.integers(0, 2**31 - 1, size=num_trees)
    if p == 0:
        # no features: every tree is a single leaf at the bootstrap mean
        vals = y[boot].mean(axis=1)[:, None]
        return ForestPredictor(np.full((num_trees, 1), -1, np.int64), np.zeros((num_trees, 1)),
                               np.zeros((num_trees, 1), np.int64), np.zeros((num_trees, 1), np.int64),
                               vals, task, clip_eps)
    depth = _UNBOUNDED_DEPTH if max_depth is None else int(max_depth)
    feat, thr, left, right, value = _kernels.build_forest(
        x, y, boot, tree_seeds, int(mtry), int(min_node_size), depth
    )
    return ForestPredictor(feat, thr, left, right, value, task, clip_eps)

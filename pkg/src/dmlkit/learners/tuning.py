"""Grid-search tuning of learner hyperparameters by K-fold cross-validation."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EmptyGrid
from ..resampling import derive_seed, draw_folds

MEASURES = ("mse", "classification_error")


@dataclass(frozen=True)
class TuneSettings:
    grid: dict = field(default_factory=dict)
    cv_folds: int = 5
    measure: str = "mse"
    tune_on_folds: bool = False

    def __post_init__(self):
        object.__setattr__(self, "grid", {k: tuple(v) for k, v in dict(self.grid).items()})
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown tuning measure {self.measure!r}")

    def points(self):
        """Grid points in first-key-slowest order."""
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise EmptyGrid("tuning grid is empty")
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.grid.values())]


def _measure(name, y, pred):
    if name == "mse":
        return float(np.mean((y - pred) ** 2))
    return float(np.mean((pred > 0.5).astype(np.float64) != y))


def evaluate_grid(spec_template, settings: TuneSettings, x, y, seed: int = 0):
    """Cross-validated loss of every grid point; returns (points, losses)."""
    points = settings.points()
    names = {f.name for f in dataclasses.fields(spec_template)}
    for key in settings.grid:
        if key not in names:
            raise ConfigError(f"learner {spec_template.kind!r} has no tunable parameter {key!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    plan = draw_folds(y.shape[0], settings.cv_folds, 1, seed)
    losses = np.zeros(len(points))
    for i, point in enumerate(points):
        spec = dataclasses.replace(spec_template, **point)
        total = 0.0
        for k, (train, test) in enumerate(plan.splits[0]):
            model = spec.fit(x[train], y[train], seed=derive_seed(seed, 2, k))
            total += _measure(settings.measure, y[test], model.predict(x[test])) * test.size
        losses[i] = total / y.shape[0]
    return points, losses


def tune_grid_search(spec_template, settings: TuneSettings, x, y, seed: int = 0):
    """Return ``spec_template`` with the grid point of smallest CV loss (first wins ties)."""
    points, losses = evaluate_grid(spec_template, settings, x, y, seed)
    best = int(np.argmin(losses))
    return dataclasses.replace(spec_template, **points[best])

"""TOML run configuration: estimation options, learner specs and tuning grids.

Example::

    model = "plr"
    score = "partialling_out"
    n_folds = 5

    [learner.ml_l]
    kind = "lasso_cv"

    [learner.ml_m]
    kind = "random_forest"
    num_trees = 100
    mtry = 20
    min_node_size = 2
    max_depth = 5

    [tune.ml_l]
    cv_folds = 5
    grid.lam = { lower = 0.05, upper = 0.1, resolution = 11 }
"""

from __future__ import annotations

import sys
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError
from .estimator import DmlConfig, nuisance_tasks
from .learners import LassoCV, LogisticLassoCV, spec_from_dict
from .learners.tuning import TuneSettings
from .scores import DEFAULT_SCORE

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ESTIMATION_KEYS = ("model", "score", "dml_procedure", "n_folds", "n_rep", "apply_cross_fitting",
                   "clip_eps", "seed")


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def parse_value(text: str):
    """Interpret a command-line value as a TOML scalar/array, else keep the string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _grid_values(key, raw):
    if isinstance(raw, Mapping):
        try:
            lo, hi, res = float(raw["lower"]), float(raw["upper"]), int(raw["resolution"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"grid.{key} needs lower, upper and resolution") from None
        if raw.get("log", False):
            return tuple(np.geomspace(lo, hi, res).tolist())
        return tuple(np.linspace(lo, hi, res).tolist())
    if isinstance(raw, (list, tuple)):
        return tuple(raw)
    return (raw,)


def parse_tune(raw: Mapping) -> TuneSettings:
    raw = dict(raw)
    grid = {k: _grid_values(k, v) for k, v in dict(raw.pop("grid", {})).items()}
    unknown = set(raw) - {"cv_folds", "measure", "tune_on_folds"}
    if unknown:
        raise ConfigError(f"unknown tuning keys {sorted(unknown)}")
    return TuneSettings(grid=grid, **raw)


def default_learner(kind: str):
    return LogisticLassoCV() if kind == "classification" else LassoCV()


def build_config(raw: Optional[Mapping] = None, **overrides) -> DmlConfig:
    """Merge a parsed config mapping with keyword overrides into a DmlConfig.

    Overrides that are ``None`` are ignored.  Required nuisance slots without
    a configured learner get a cross-validated lasso (regression) or a
    cross-validated L1 logistic regression (classification).
    """
    raw = dict(raw or {})
    learners_raw = dict(raw.pop("learner", {}))
    tune_raw = dict(raw.pop("tune", {}))
    unknown = set(raw) - set(ESTIMATION_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    opts = {k: v for k, v in raw.items()}
    opts.update({k: v for k, v in overrides.items() if v is not None})
    learners = {}
    for slot, spec in learners_raw.items():
        if not isinstance(spec, Mapping):
            raise ConfigError(f"learner.{slot} must be a table with a 'kind' key")
        learners[slot] = spec_from_dict(spec)
    model = opts.get("model", "plr")
    score = opts.get("score")
    if score is None:
        score = DEFAULT_SCORE.get(model)
    try:
        tasks = nuisance_tasks(model, score)
    except ConfigError:
        tasks = []
    for task in tasks:
        if task.slot not in learners:
            if task.slot == "ml_g" and "ml_l" in learners and task.name == "g":
                learners["ml_g"] = learners["ml_l"]
            else:
                learners[task.slot] = default_learner(task.kind)
    tune = {slot: parse_tune(v) for slot, v in tune_raw.items()}
    try:
        return DmlConfig(learners=learners, tune=tune, **opts)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

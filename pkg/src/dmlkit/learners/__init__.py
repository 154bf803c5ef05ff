"""Nuisance learners implemented on numpy with compiled inner loops."""

from .forest import ForestPredictor, fit_random_forest
from .linear import (
    ConstantPredictor,
    LassoPredictor,
    LinearPredictor,
    LogisticPredictor,
    default_lambda_grid,
    fit_lasso_cd,
    fit_lasso_cv,
    fit_logistic,
    fit_logistic_lasso_cv,
    fit_ols,
    fit_ridge,
    lambda_max,
)
from .specs import (
    SPEC_KINDS,
    Lasso,
    LassoCV,
    Logistic,
    LogisticLassoCV,
    Ols,
    RandomForest,
    Ridge,
    for_task,
    spec_from_dict,
    spec_to_dict,
)
from .tuning import TuneSettings, evaluate_grid, tune_grid_search

__all__ = [
    "ConstantPredictor", "ForestPredictor", "Lasso", "LassoCV", "LassoPredictor",
    "LinearPredictor", "Logistic", "LogisticLassoCV", "LogisticPredictor", "Ols",
    "RandomForest", "Ridge", "SPEC_KINDS", "TuneSettings", "default_lambda_grid",
    "evaluate_grid", "fit_lasso_cd", "fit_lasso_cv", "fit_logistic", "fit_logistic_lasso_cv",
    "fit_ols", "fit_random_forest", "fit_ridge", "for_task", "lambda_max", "spec_from_dict",
    "spec_to_dict", "tune_grid_search",
]

"""Double/debiased machine learning with cross-fitting and orthogonal scores."""

from .dataset import Dataset, TreatmentView, from_matrix, load_csv, treatment_view, write_csv
from .estimator import DmlConfig, DmlFit, ScorePanel, fit
from .inference import (
    joint_confint,
    multiplier_bootstrap,
    p_adjust_classical,
    p_adjust_romano_wolf,
)
from .resampling import FoldPlan, draw_folds, draw_no_crossfit, validate_external_plan
from .scores import CustomScore

__version__ = "0.1.0"

__all__ = [
    "CustomScore", "Dataset", "DmlConfig", "DmlFit", "FoldPlan", "ScorePanel", "TreatmentView",
    "draw_folds", "draw_no_crossfit", "fit", "from_matrix", "joint_confint", "load_csv",
    "multiplier_bootstrap", "p_adjust_classical", "p_adjust_romano_wolf", "treatment_view",
    "validate_external_plan", "write_csv",
]

"""Tree ensembles, metrics and the two-stage detector."""

from .boosting import BoostingParams, GradientBoostingModel, train_gradient_boosting
from .forest import ForestParams, RandomForestModel, predict_forest, train_random_forest
from .metrics import ConfusionMatrix, MetricsReport, evaluate
from .persistence import load_model, save_model, serialize_model
from .pipeline import binary_labels, run_two_stage_pipeline

__all__ = [
    "BoostingParams", "GradientBoostingModel", "train_gradient_boosting",
    "ForestParams", "RandomForestModel", "predict_forest", "train_random_forest",
    "ConfusionMatrix", "MetricsReport", "evaluate",
    "load_model", "save_model", "serialize_model",
    "binary_labels", "run_two_stage_pipeline",
]

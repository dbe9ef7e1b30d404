from .analysis import FeatureAnalysis, PairwiseRow, per_patient_analysis, score_matrix
from .config import Cell, ExperimentConfig, load_config, parse_cell, parse_config
from .outputs import emit_outputs
from .pipeline import (
    Evaluation,
    PreparedData,
    RollingForecast,
    evaluate,
    load_series,
    make_estimator,
    prepare_data,
    resolve_grid,
    rolling_forecast,
    train,
)

__all__ = [
    "FeatureAnalysis", "PairwiseRow", "per_patient_analysis", "score_matrix",
    "Cell", "ExperimentConfig", "load_config", "parse_cell", "parse_config",
    "emit_outputs",
    "Evaluation", "PreparedData", "RollingForecast", "evaluate", "load_series", "make_estimator",
    "prepare_data", "resolve_grid", "rolling_forecast", "train",
]

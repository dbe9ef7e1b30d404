"""Probabilistic glucose forecasting: evidential and MC-dropout sequence models."""

from .estimators import BayesianRidgeForecaster, SequenceForecaster, ZScoreScaler
from .models import ModelConfig, build_model

__version__ = "0.1.0"

__all__ = ["SequenceForecaster", "BayesianRidgeForecaster", "ZScoreScaler", "ModelConfig", "build_model"]

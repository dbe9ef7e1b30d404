"""scikit-learn style estimators wrapping the forecasting models.

All estimators take windows ``X`` of shape ``(N, 36, F)`` and targets ``y``
of shape ``(N, h)`` in mg/dL. Glucose must be input channel 0.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import load_arrays, save_arrays
from .baselines import mc_dropout_predict, ridge_distribution, ridge_fit, ridge_predict, RidgePosterior
from .data import WINDOW_LENGTH
from .evidential import constrain, student_t_view
from .exceptions import ConfigError, DegenerateChannelError, ShapeError, StateError
from .models import ModelConfig, build_model
from .training import EpochRecord, TrainingLog, fit_model

__all__ = ["ZScoreScaler", "SequenceForecaster", "BayesianRidgeForecaster", "check_windows", "check_targets"]

DEFAULT_DROPOUT = 0.2


def check_windows(X, n_features=None) -> np.ndarray:
    """Validate a window batch: float64, shape ``(N, 36, F)``, finite."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] != WINDOW_LENGTH:
        raise ShapeError(f"expected windows of shape (N, {WINDOW_LENGTH}, F), got {X.shape}")
    if n_features is not None and X.shape[2] != n_features:
        raise ShapeError(f"expected {n_features} input channels, got {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("windows contain non-finite values")
    return X


def check_targets(y, n_rows, horizon=None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or len(y) != n_rows:
        raise ShapeError(f"expected targets of shape ({n_rows}, h), got {y.shape}")
    if horizon is not None and y.shape[1] != horizon:
        raise ShapeError(f"expected horizon {horizon}, got {y.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return y


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Per-channel standardization with the sample (ddof=1) standard deviation.

    Statistics are pooled over every axis except the last, so both tabular
    ``(n, F)`` and windowed ``(N, T, F)`` arrays are accepted.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        flat = X.reshape(-1, X.shape[-1])
        if len(flat) < 2:
            raise ValueError("need at least two rows to estimate a standard deviation")
        self.mean_ = flat.mean(axis=0)
        self.scale_ = flat.std(axis=0, ddof=1)
        bad = np.flatnonzero(self.scale_ == 0)
        if bad.size:
            raise DegenerateChannelError(f"channel {int(bad[0])} has zero variance")
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} channels, got {X.shape[-1]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=np.float64) * self.scale_ + self.mean_


class _WindowForecaster(RegressorMixin, BaseEstimator):
    """Shared input/target normalization."""

    def _fit_scaling(self, X):
        if self.normalize:
            self.scaler_ = ZScoreScaler().fit(X)
            mean = self.scaler_.mean_[0] if self.target_mean is None else self.target_mean
            std = self.scaler_.scale_[0] if self.target_std is None else self.target_std
        else:
            if self.target_mean is None or self.target_std is None:
                raise ConfigError("normalize=False needs target_mean and target_std")
            self.scaler_ = None
            mean, std = self.target_mean, self.target_std
        if not std > 0:
            raise ConfigError("target_std must be positive")
        self.target_mean_, self.target_std_ = float(mean), float(std)

    def _scale(self, X):
        return X if self.scaler_ is None else self.scaler_.transform(X)

    def _scale_y(self, y):
        return (y - self.target_mean_) / self.target_std_


class SequenceForecaster(_WindowForecaster):
    """Neural forecaster with a plain, MC-dropout or evidential head.

    Parameters
    ----------
    architecture : {"lstm", "gru_attn", "transformer"}
    head : {"plain", "dropout", "evidential"}
    horizon : int
        Forecast steps (5 minutes each).
    epochs, batch_size, lr : training schedule (Adam).
    dropout : float, optional
        Dropout rate for the dropout head (default 0.2).
    kl_coef : float
        Weight of the evidence regularizer in the evidential loss.
    beta_r : float, optional
        Reference scale of the regularizer in mg/dL. Defaults to the largest
        training target; it is divided by the squared glucose std internally.
    mc_samples : int
        Stochastic passes used by the dropout head at prediction time.
    normalize : bool
        Fit a z-score scaler on the training windows. When False the inputs
        must already be normalized and ``target_mean``/``target_std`` given.
    seed : int
        Controls initialization, batch order and dropout masks.
    """

    def __init__(self, architecture="transformer", head="evidential", horizon=6, epochs=300,
                 batch_size=1024, lr=1e-4, dropout=None, kl_coef=0.01, beta_r=None, mc_samples=100,
                 normalize=True, target_mean=None, target_std=None, seed=0):
        self.architecture = architecture
        self.head = head
        self.horizon = horizon
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dropout = dropout
        self.kl_coef = kl_coef
        self.beta_r = beta_r
        self.mc_samples = mc_samples
        self.normalize = normalize
        self.target_mean = target_mean
        self.target_std = target_std
        self.seed = seed

    def _model_config(self, n_features):
        rate = None
        if self.head == "dropout":
            rate = DEFAULT_DROPOUT if self.dropout is None else self.dropout
        return ModelConfig(self.architecture, self.head, int(self.horizon), rate, int(self.seed), int(n_features))

    def fit(self, X, y, X_val=None, y_val=None, callback=None):
        """Train on windows ``X`` and mg/dL targets ``y``; optional validation split."""
        X = check_windows(X)
        y = check_targets(y, len(X), self.horizon)
        config = self._model_config(X.shape[2])
        self._fit_scaling(X)
        beta_r = float(np.max(y)) if self.beta_r is None else float(self.beta_r)
        if beta_r <= 0:
            raise ConfigError("beta_r must be positive")
        self.beta_r_ = beta_r / self.target_std_ ** 2
        self.model_ = build_model(config)
        Xv = yv = None
        if X_val is not None:
            Xv = self._scale(check_windows(X_val, X.shape[2]))
            yv = self._scale_y(check_targets(y_val, len(Xv), self.horizon))
        self.training_log_ = fit_model(
            self.model_, self._scale(X), self._scale_y(y), Xv, yv,
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, beta_r=self.beta_r_,
            kl_coef=self.kl_coef, seed=self.seed, callback=callback)
        self.n_features_in_ = X.shape[2]
        return self

    def _prepare(self, X):
        check_is_fitted(self, "model_")
        return self._scale(check_windows(X, self.n_features_in_))

    def predict_params(self, X):
        """Constrained NIG parameters (normalized units); evidential head only."""
        if self.head != "evidential":
            raise StateError(f"NIG parameters need the evidential head, not {self.head!r}")
        return constrain(self.model_.predict_raw(self._prepare(X)), self.horizon).numpy()

    def predict_distribution(self, X, seed=None):
        """Predictive distribution in mg/dL (Student-t or MC-dropout samples)."""
        Xs = self._prepare(X)
        if self.head == "evidential":
            params = constrain(self.model_.predict_raw(Xs), self.horizon).numpy()
            return student_t_view(params, self.target_mean_, self.target_std_)
        if self.head == "dropout":
            fc = mc_dropout_predict(self.model_, Xs, self.mc_samples, self.seed if seed is None else seed,
                                    self.target_mean_, self.target_std_)
            return fc.distribution()
        raise StateError("a plain head has no predictive distribution")

    def predict(self, X):
        """Point forecast in mg/dL: the predictive mean (or the raw output for plain heads)."""
        if self.head == "plain":
            return self.model_.predict_raw(self._prepare(X)) * self.target_std_ + self.target_mean_
        return self.predict_distribution(X).mean()

    # persistence -------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "model_")
        arrays = {f"model.{k}": v for k, v in self.model_.state_dict().items()}
        if self.scaler_ is not None:
            arrays["scaler.mean"] = self.scaler_.mean_
            arrays["scaler.scale"] = self.scaler_.scale_
        meta = {
            "kind": "SequenceForecaster",
            "params": self.get_params(),
            "target_mean": self.target_mean_,
            "target_std": self.target_std_,
            "beta_r": self.beta_r_,
            "n_features": self.n_features_in_,
            "best_epoch": self.training_log_.best_epoch,
            "log": self.training_log_.to_rows(),
        }
        save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_arrays(path)
        if meta.get("kind") != "SequenceForecaster":
            raise StateError(f"{path} does not hold a SequenceForecaster")
        est = cls(**meta["params"])
        est.n_features_in_ = int(meta["n_features"])
        est.target_mean_, est.target_std_ = meta["target_mean"], meta["target_std"]
        est.beta_r_ = meta["beta_r"]
        est.scaler_ = None
        if "scaler.mean" in arrays:
            est.scaler_ = ZScoreScaler()
            est.scaler_.mean_, est.scaler_.scale_ = arrays["scaler.mean"], arrays["scaler.scale"]
            est.scaler_.n_features_in_ = est.n_features_in_
        est.model_ = build_model(est._model_config(est.n_features_in_))
        est.model_.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("model.")})
        est.training_log_ = TrainingLog([EpochRecord(*r) for r in meta["log"]], meta["best_epoch"])
        return est


class BayesianRidgeForecaster(_WindowForecaster):
    """Evidence-maximizing Bayesian linear model on flattened windows (one per step)."""

    def __init__(self, normalize=True, target_mean=None, target_std=None, tol=1e-6, max_iter=300):
        self.normalize = normalize
        self.target_mean = target_mean
        self.target_std = target_std
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_windows(X)
        y = check_targets(y, len(X))
        self._fit_scaling(X)
        flat = self._scale(X).reshape(len(X), -1)
        self.posterior_ = ridge_fit(flat, self._scale_y(y), tol=self.tol, max_iter=self.max_iter)
        self.n_features_in_ = X.shape[2]
        self.horizon_ = y.shape[1]
        return self

    def _flat(self, X):
        check_is_fitted(self, "posterior_")
        X = self._scale(check_windows(X, self.n_features_in_))
        return X.reshape(len(X), -1)

    def predict_distribution(self, X):
        flat = self._flat(X)
        return ridge_distribution(self.posterior_, flat, self.target_mean_, self.target_std_)

    def predict(self, X):
        flat = self._flat(X)
        mean, _ = ridge_predict(self.posterior_, flat)
        return mean * self.target_std_ + self.target_mean_

    def save(self, path):
        check_is_fitted(self, "posterior_")
        p = self.posterior_
        arrays = {"mean": p.mean, "cov": p.cov, "noise_var": np.asarray(p.noise_var),
                  "prior_precision": np.asarray(p.prior_precision), "n_iter": np.asarray(p.n_iter, dtype=float)}
        if self.scaler_ is not None:
            arrays["scaler.mean"] = self.scaler_.mean_
            arrays["scaler.scale"] = self.scaler_.scale_
        meta = {"kind": "BayesianRidgeForecaster", "params": self.get_params(),
                "target_mean": self.target_mean_, "target_std": self.target_std_,
                "n_features": self.n_features_in_, "horizon": self.horizon_}
        save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_arrays(path)
        if meta.get("kind") != "BayesianRidgeForecaster":
            raise StateError(f"{path} does not hold a BayesianRidgeForecaster")
        est = cls(**meta["params"])
        est.target_mean_, est.target_std_ = meta["target_mean"], meta["target_std"]
        est.n_features_in_, est.horizon_ = int(meta["n_features"]), int(meta["horizon"])
        est.scaler_ = None
        if "scaler.mean" in arrays:
            est.scaler_ = ZScoreScaler()
            est.scaler_.mean_, est.scaler_.scale_ = arrays["scaler.mean"], arrays["scaler.scale"]
            est.scaler_.n_features_in_ = est.n_features_in_
        est.posterior_ = RidgePosterior(arrays["mean"], arrays["cov"], arrays["noise_var"],
                                        arrays["prior_precision"], arrays["n_iter"].astype(int))
        return est

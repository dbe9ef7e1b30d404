"""Monte Carlo dropout inference and the Bayesian ridge regression baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .distributions import Empirical, Gaussian
from .exceptions import ConfigError, NumericError, ShapeError

__all__ = [
    "McDropoutForecast",
    "mc_dropout_predict",
    "RidgePosterior",
    "ridge_fit",
    "ridge_predict",
    "add_bias",
    "ridge_distribution",
]


@dataclass(frozen=True)
class McDropoutForecast:
    """Stochastic forward passes; ``samples`` is ``(n_samples, N, h)`` in mg/dL."""

    samples: np.ndarray

    @property
    def mean(self):
        return self.samples.mean(axis=0)

    @property
    def std(self):
        # shifted by the first pass so identical samples give exactly zero
        d = self.samples - self.samples[0]
        n = len(d)
        return np.sqrt(np.maximum(((d - d.mean(axis=0)) ** 2).sum(axis=0) / (n - 1), 0.0))

    def quantile(self, q):
        return np.quantile(self.samples, q, axis=0)

    def distribution(self) -> Empirical:
        return Empirical(self.samples)


def mc_dropout_predict(model, windows, n_samples=100, seed=0, target_mean=0.0, target_std=1.0,
                       batch_size=2048) -> McDropoutForecast:
    """Draw ``n_samples`` dropout-active passes for every window.

    The trunk up to the dropout site is deterministic, so it runs once; each
    pass then resamples the mask from the counter-based stream keyed by
    ``(seed, site, sample index)`` and applies the head.
    """
    if model.config.head != "dropout":
        raise ConfigError(f"MC dropout needs a dropout head, model has {model.config.head!r}")
    if n_samples < 2:
        raise ConfigError("n_samples must be at least 2")
    feats = model.features(windows, batch_size=batch_size)
    ft = Tensor(feats)
    out = np.empty((n_samples, len(feats), model.config.horizon))
    for s in range(n_samples):
        mask = model.dropout_mask(len(feats), seed, s)
        out[s] = model.head(ft, mask).data
    return McDropoutForecast(out * target_std + target_mean)


def add_bias(X):
    X = np.asarray(X, dtype=np.float64)
    return np.column_stack([X, np.ones(len(X))])


@dataclass(frozen=True)
class RidgePosterior:
    """Gaussian weight posterior for each horizon step.

    ``mean``: ``(h, d)``; ``cov``: ``(h, d, d)``; ``noise_var``: ``(h,)``
    and ``prior_precision``: ``(h,)``. Features include the trailing bias
    column, so ``d = 36 * 4 + 1`` for flattened windows.
    """

    mean: np.ndarray
    cov: np.ndarray
    noise_var: np.ndarray
    prior_precision: np.ndarray
    n_iter: np.ndarray

    @property
    def n_features(self):
        return self.mean.shape[1]


def _fit_step(evals, evecs, Xty, yy, n, lam, beta, tol, max_iter, optimize):
    # Posterior precision = beta * X'X + lam * I, diagonal in the eigenbasis.
    proj = evecs.T @ Xty
    it = 0
    for it in range(1, max_iter + 1):
        coef_e = beta * proj / (beta * evals + lam)
        m = evecs @ coef_e
        if not optimize:
            break
        gamma = np.sum(beta * evals / (beta * evals + lam))
        rss = max(yy - 2.0 * m @ Xty + np.sum(evals * coef_e**2), 1e-12 * max(yy, 1e-300))
        lam_new = gamma / max(m @ m, 1e-300)
        beta_new = (n - gamma) / rss
        done = abs(lam_new - lam) <= tol * lam and abs(beta_new - beta) <= tol * beta
        lam, beta = lam_new, beta_new
        if done:
            break
    coef_e = beta * proj / (beta * evals + lam)
    m = evecs @ coef_e
    cov = (evecs / (beta * evals + lam)) @ evecs.T
    return m, 0.5 * (cov + cov.T), 1.0 / beta, lam, it


def ridge_fit(X, Y, prior_precision=1.0, noise_precision=1.0, optimize=True, tol=1e-6,
              max_iter=300) -> RidgePosterior:
    """Evidence-maximized Bayesian linear regression, one model per target column.

    ``X`` is ``(N, d)`` without the bias column (it is appended here); ``Y`` is
    ``(N, h)``. With ``optimize=False`` the given precisions are used as is.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or len(X) != len(Y) or len(X) == 0:
        raise ShapeError(f"ridge_fit: incompatible shapes {X.shape} and {Y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NumericError("ridge_fit: non-finite input")
    Xb = add_bias(X)
    evals, evecs = np.linalg.eigh(Xb.T @ Xb)
    evals = np.clip(evals, 0.0, None)
    results = [
        _fit_step(evals, evecs, Xb.T @ y, float(y @ y), len(y), float(prior_precision),
                  float(noise_precision), tol, max_iter, optimize)
        for y in Y.T
    ]
    mean, cov, noise, lam, its = zip(*results)
    return RidgePosterior(np.array(mean), np.array(cov), np.array(noise), np.array(lam), np.array(its))


def ridge_predict(posterior: RidgePosterior, X):
    """Predictive mean ``w'x`` and variance ``noise + x' Sigma x`` per step, ``(N, h)`` each."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] + 1 != posterior.n_features:
        raise ShapeError(f"ridge_predict: expected {posterior.n_features - 1} features, got {X.shape[1]}")
    Xb = add_bias(X)
    mean = Xb @ posterior.mean.T
    quad = np.column_stack([((Xb @ cov) * Xb).sum(axis=1) for cov in posterior.cov])
    return mean, quad + posterior.noise_var[None, :]


def ridge_distribution(posterior, X, target_mean=0.0, target_std=1.0) -> Gaussian:
    mean, var = ridge_predict(posterior, X)
    return Gaussian(mean * target_std + target_mean, np.sqrt(var) * target_std)

"""Log-gamma (Lanczos, g=7, 9 terms) and the matching digamma."""

import numpy as np

from .tensor import Tensor, _make, as_tensor

__all__ = ["DomainError", "log_gamma", "digamma", "lgamma", "EULER_GAMMA"]

EULER_GAMMA = 0.5772156649015329

_G = 7.0
_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class DomainError(ValueError):
    """Argument outside the function's domain."""


def _check_positive(x):
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("log_gamma requires finite x > 0")


def _lanczos_terms(z):
    # z = x - 1 with x >= 0.5
    k = np.arange(1, 9).reshape((8,) + (1,) * z.ndim)
    denom = z[None] + k
    series = _COEF[0] + (_COEF[1:].reshape(k.shape) / denom).sum(axis=0)
    dseries = -(_COEF[1:].reshape(k.shape) / denom**2).sum(axis=0)
    return series, dseries


def _lgamma_right(x):
    z = x - 1.0
    series, _ = _lanczos_terms(z)
    t = z + _G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)


def _digamma_right(x):
    z = x - 1.0
    series, dseries = _lanczos_terms(z)
    t = z + _G + 0.5
    return np.log(t) + (z + 0.5) / t - 1.0 + dseries / series


def log_gamma(x):
    """``log Gamma(x)`` for x > 0 (reflection below 1/2)."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    _check_positive(x)
    small = x < 0.5
    right = np.where(small, 1.0 - x, x)
    out = _lgamma_right(right)
    if np.any(small):
        xs = x[small]
        out[small] = np.log(np.pi / np.sin(np.pi * xs)) - out[small]
    return float(out[0]) if scalar else out


def digamma(x):
    """Derivative of :func:`log_gamma`, differentiated from the same approximation."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    _check_positive(x)
    small = x < 0.5
    right = np.where(small, 1.0 - x, x)
    out = _digamma_right(right)
    if np.any(small):
        out[small] = out[small] - np.pi / np.tan(np.pi * x[small])
    return float(out[0]) if scalar else out


def lgamma(a) -> Tensor:
    """Differentiable log-gamma on tensors."""
    a = as_tensor(a)
    ad = a.data
    return _make(np.asarray(log_gamma(ad)), (a,), lambda g: (g * digamma(ad),))

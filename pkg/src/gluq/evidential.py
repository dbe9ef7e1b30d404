"""Deep evidential regression with a normal-inverse-gamma output head.

The network emits four raw values per horizon step. :func:`constrain` maps
them to ``(gamma, nu, alpha, beta)``; the marginal predictive is a Student-t
with location ``gamma``, scale ``sqrt(beta (1 + nu) / (alpha nu))`` and
``2 alpha`` degrees of freedom. Losses work on tensors so they are
differentiable; plain arrays are accepted wherever a tensor is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import EULER_GAMMA, ops
from .autodiff.special import lgamma
from .autodiff.tensor import Tensor, as_tensor
from .distributions import StudentT
from .exceptions import ConfigError, DomainError, NumericError

__all__ = [
    "EVIDENCE_FLOOR",
    "EvidentialParams",
    "UncertaintyDecomposition",
    "StudentTView",
    "constrain",
    "nll_loss",
    "nll_per_point",
    "kl_regularizer",
    "evidence_regularizer",
    "total_loss",
    "decompose",
    "student_t_view",
    "predictive_interval",
    "event_probability",
]

EVIDENCE_FLOOR = 1e-6
_HALF_LOG_PI = 0.5 * np.log(np.pi)

StudentTView = StudentT


@dataclass(frozen=True)
class EvidentialParams:
    """NIG parameters per horizon step, each of shape ``(N, h)``.

    Fields hold :class:`Tensor` objects during training and arrays afterwards.
    """

    gamma: object
    nu: object
    alpha: object
    beta: object

    def numpy(self) -> "EvidentialParams":
        def arr(v):
            return v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)

        return EvidentialParams(arr(self.gamma), arr(self.nu), arr(self.alpha), arr(self.beta))

    def subset(self, idx) -> "EvidentialParams":
        p = self.numpy()
        return EvidentialParams(p.gamma[idx], p.nu[idx], p.alpha[idx], p.beta[idx])


@dataclass(frozen=True)
class UncertaintyDecomposition:
    aleatoric: np.ndarray
    epistemic: np.ndarray
    predictive: np.ndarray


def _data(v):
    return v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)


def _check(params: EvidentialParams):
    nu, alpha, beta = _data(params.nu), _data(params.alpha), _data(params.beta)
    if not (np.all(alpha > 1) and np.all(nu > 0) and np.all(beta > 0)):
        raise DomainError("evidential parameters require alpha > 1, nu > 0, beta > 0")


def constrain(raw, horizon=None) -> EvidentialParams:
    """Map raw head outputs to valid NIG parameters.

    ``raw`` is ``(N, 4, h)`` or ``(N, 4h)`` with channel order
    ``(gamma, nu, alpha, beta)``; a bare ``(4, h)`` block is also accepted.
    """
    raw = as_tensor(raw)
    if not np.all(np.isfinite(raw.data)):
        raise NumericError("non-finite raw evidential outputs")
    if raw.ndim == 2 and raw.shape[0] == 4 and horizon is None:
        raw = raw.reshape(1, 4, raw.shape[1])
    elif raw.ndim == 2:
        h = horizon if horizon is not None else raw.shape[1] // 4
        if raw.shape[1] != 4 * h:
            raise ValueError(f"raw width {raw.shape[1]} is not 4 * horizon ({h})")
        raw = raw.reshape(raw.shape[0], 4, h)
    gamma = raw[:, 0, :]
    nu = ops.softplus(raw[:, 1, :]) + EVIDENCE_FLOOR
    alpha = ops.softplus(raw[:, 2, :]) + (1.0 + EVIDENCE_FLOOR)
    beta = ops.softplus(raw[:, 3, :]) + EVIDENCE_FLOOR
    return EvidentialParams(gamma, nu, alpha, beta)


def _nll_terms(params, y):
    g, nu, a, b = (as_tensor(v) for v in (params.gamma, params.nu, params.alpha, params.beta))
    y = as_tensor(y)
    two_b_lambda = 2.0 * b * (1.0 + nu) / nu
    resid = y - g
    return (lgamma(a) - lgamma(a + 0.5)
            + 0.5 * ops.log(two_b_lambda) + _HALF_LOG_PI
            + (a + 0.5) * ops.log(1.0 + resid * resid / two_b_lambda))


def nll_per_point(params: EvidentialParams, y_obs) -> Tensor:
    """Negative log of the NIG-marginal (Student-t) density at each target."""
    _check(params)
    return _nll_terms(params, y_obs)


def nll_loss(params: EvidentialParams, y_obs) -> Tensor:
    """Mean Student-t negative log-likelihood over batch and horizon."""
    return nll_per_point(params, y_obs).mean()


def kl_regularizer(params: EvidentialParams, y_obs, beta_r: float) -> Tensor:
    """Error-weighted KL divergence to a weak NIG prior with ``alpha_r = 1``.

    ``|y - gamma| * (alpha log beta_r + log Gamma(alpha) - alpha log beta
    + gamma_e (alpha - 1) + (beta - beta_r) / beta_r)``, averaged.
    """
    if not beta_r > 0:
        raise ConfigError(f"beta_r must be positive, got {beta_r}")
    # alpha = 1 is the reference prior itself, so the divergence is defined there
    if not (np.all(_data(params.alpha) >= 1) and np.all(_data(params.beta) > 0)):
        raise DomainError("KL regularizer requires alpha >= 1 and beta > 0")
    g, a, b = (as_tensor(v) for v in (params.gamma, params.alpha, params.beta))
    err = ops.abs(as_tensor(y_obs) - g)
    divergence = (a * np.log(beta_r) + lgamma(a) - a * ops.log(b)
                  + EULER_GAMMA * (a - 1.0) + (b - beta_r) / beta_r)
    return (err * divergence).mean()


def evidence_regularizer(params: EvidentialParams, y_obs) -> Tensor:
    """``|y - gamma| (2 nu + alpha)``, averaged; kept for ablations."""
    _check(params)
    g, nu, a = (as_tensor(v) for v in (params.gamma, params.nu, params.alpha))
    return (ops.abs(as_tensor(y_obs) - g) * (2.0 * nu + a)).mean()


def total_loss(params, y_obs, beta_r, kl_coef=0.01, regularizer="kl") -> Tensor:
    loss = nll_loss(params, y_obs)
    if kl_coef == 0:
        return loss
    if regularizer == "kl":
        reg = kl_regularizer(params, y_obs, beta_r)
    elif regularizer == "evidence":
        reg = evidence_regularizer(params, y_obs)
    else:
        raise ConfigError(f"unknown regularizer {regularizer!r}")
    return loss + kl_coef * reg


def decompose(params: EvidentialParams, scale=1.0) -> UncertaintyDecomposition:
    """Aleatoric, epistemic and predictive variances, times ``scale**2``.

    Pass the glucose standard deviation as ``scale`` to get mg/dL^2.
    """
    p = params.numpy()
    if np.any(p.alpha <= 1):
        raise DomainError("decomposition requires alpha > 1")
    s2 = float(scale) ** 2
    aleatoric = p.beta / (p.alpha - 1.0) * s2
    epistemic = aleatoric / p.nu
    return UncertaintyDecomposition(aleatoric, epistemic, aleatoric + epistemic)


def student_t_view(params: EvidentialParams, target_mean=0.0, target_std=1.0) -> StudentT:
    """Predictive Student-t, optionally mapped back to mg/dL."""
    p = params.numpy()
    _check(p)
    scale = np.sqrt(p.beta * (1.0 + p.nu) / (p.alpha * p.nu))
    return StudentT(p.gamma * target_std + target_mean, scale * target_std, 2.0 * p.alpha)


def predictive_interval(params, level, target_mean=0.0, target_std=1.0):
    """Central ``level`` interval of the Student-t predictive, per step."""
    return student_t_view(params, target_mean, target_std).interval(level)


def event_probability(params, threshold, direction="below", target_mean=0.0,
                      target_std=1.0, aggregate="max"):
    """Per-window probability of crossing ``threshold`` (max over steps by default)."""
    view = student_t_view(params, target_mean, target_std)
    return view.event_probability(threshold, direction, aggregate)

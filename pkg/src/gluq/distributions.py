"""Predictive distributions shared by the evidential, dropout and ridge models.

All three expose the same view: per ``(window, step)`` location and spread,
central intervals, CDF values, interval coverage and event probabilities.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .autodiff.special import log_gamma
from .exceptions import DomainError

__all__ = [
    "betainc",
    "student_t_cdf",
    "student_t_ppf",
    "PredictiveDistribution",
    "StudentT",
    "Gaussian",
    "Empirical",
    "order_statistic_ranks",
]

_TINY = 1e-300
_EPS = 1e-15


def _betacf(a, b, x, max_iter=20000):
    """Continued fraction for the incomplete beta (modified Lentz), vectorized."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        aa_, bb_, xx = a[idx], b[idx], x[idx]
        cc, dd, hh = c[idx], d[idx], h[idx]
        m2 = 2.0 * m
        num = m * (bb_ - m) * xx / ((qam[idx] + m2) * (aa_ + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        hh = hh * dd * cc
        num = -(aa_ + m) * (qab[idx] + m) * xx / ((aa_ + m2) * (qap[idx] + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        delta = dd * cc
        hh = hh * delta
        c[idx], d[idx], h[idx] = cc, dd, hh
        active[idx] = np.abs(delta - 1.0) >= _EPS
    return h


def betainc(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)`` for a, b > 0, x in [0, 1]."""
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, b, x)))
    out = np.empty(x.shape)
    lo, hi = x <= 0.0, x >= 1.0
    out[lo], out[hi] = 0.0, 1.0
    mid = ~(lo | hi)
    if np.any(mid):
        am, bm, xm = a[mid], b[mid], x[mid]
        log_front = (am * np.log(xm) + bm * np.log1p(-xm)
                     - log_gamma(am) - log_gamma(bm) + log_gamma(am + bm))
        front = np.exp(log_front)
        swap = xm > (am + 1.0) / (am + bm + 2.0)
        aa = np.where(swap, bm, am)
        bb = np.where(swap, am, bm)
        xx = np.where(swap, 1.0 - xm, xm)
        cf = _betacf(aa, bb, xx)
        out[mid] = np.where(swap, 1.0 - front * cf / bm, front * cf / am)
    return out


def student_t_cdf(t, df):
    """Standard Student-t CDF via ``I_{df/(df+t^2)}(df/2, 1/2)``.

    Near the centre ``df/(df+t^2)`` rounds to 1, so there the complementary
    form ``I_{t^2/(df+t^2)}(1/2, df/2)`` is used instead.
    """
    t, df = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(df, dtype=np.float64))
    t2 = t * t
    half = np.full(t.shape, 0.5)
    centre = t2 < df
    tail = 0.5 * betainc(df / 2.0, half, df / (df + t2))
    inner = 0.5 * betainc(half, df / 2.0, t2 / (df + t2))
    upper = np.where(centre, 0.5 + inner, 1.0 - tail)
    return np.where(t > 0, upper, 1.0 - upper)


def student_t_ppf(p, df, tol=1e-10):
    """Standard Student-t quantile by bisection on :func:`student_t_cdf`."""
    p, df = np.broadcast_arrays(np.asarray(p, dtype=np.float64), np.asarray(df, dtype=np.float64))
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    upper = np.maximum(p, 1.0 - p)
    lo = np.zeros(p.shape)
    hi = np.ones(p.shape)
    while True:
        short = student_t_cdf(hi, df) < upper
        if not np.any(short):
            break
        hi = np.where(short, hi * 2.0, hi)
    while np.any(hi - lo > tol * np.maximum(1.0, hi)):
        mid = 0.5 * (lo + hi)
        below = student_t_cdf(mid, df) < upper
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    q = 0.5 * (lo + hi)
    return np.where(p >= 0.5, q, -q)


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise DomainError(f"coverage level must lie in (0, 1), got {level}")


def order_statistic_ranks(n, level):
    """1-based ranks ``ceil((1 -/+ level)/2 * n)`` of the empirical interval ends."""
    _check_level(level)
    # round away float noise such as 0.95 * 100 = 95.00000000000001
    lo = math.ceil(round((1.0 - level) / 2.0 * n, 9))
    hi = math.ceil(round((1.0 + level) / 2.0 * n, 9))
    return min(max(lo, 1), n), min(max(hi, 1), n)


class PredictiveDistribution:
    """Per-(window, step) predictive distribution in mg/dL."""

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def std(self) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, y) -> np.ndarray:
        raise NotImplementedError

    def interval(self, level):
        raise NotImplementedError

    def sample(self, rng, size=None) -> np.ndarray:
        raise NotImplementedError

    def subset(self, idx) -> "PredictiveDistribution":
        raise NotImplementedError

    @property
    def shape(self):
        return self.mean().shape

    def window_uncertainty(self) -> np.ndarray:
        """Scalar uncertainty per window: mean predictive std over the horizon."""
        return self.std().mean(axis=1)

    def contains(self, y, level) -> np.ndarray:
        lo, hi = self.interval(level)
        y = np.asarray(y, dtype=np.float64)
        return (lo <= y) & (y <= hi)

    def coverage(self, y, levels) -> np.ndarray:
        """Fraction of observations inside the central interval, per level."""
        return np.array([self.contains(y, lv).mean() for lv in levels])

    def step_event_probability(self, threshold, direction="below"):
        below = self.cdf(np.full(self.shape, float(threshold)))
        if direction == "below":
            return below
        if direction == "above":
            return 1.0 - below
        raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")

    def event_probability(self, threshold, direction="below", aggregate="max"):
        """Per-window probability that the trajectory crosses ``threshold``."""
        p = self.step_event_probability(threshold, direction)
        if aggregate == "max":
            return p.max(axis=1)
        if aggregate == "union":
            return 1.0 - np.prod(1.0 - p, axis=1)
        raise ValueError(f"aggregate must be 'max' or 'union', got {aggregate!r}")


class _LocationScale(PredictiveDistribution):
    def mean(self):
        return self.loc

    def _standard_cdf(self, z):
        raise NotImplementedError

    def _standard_ppf(self, p):
        raise NotImplementedError

    def cdf(self, y):
        return self._standard_cdf((np.asarray(y, dtype=np.float64) - self.loc) / self.scale)

    def interval(self, level):
        _check_level(level)
        half = self._standard_ppf((1.0 + level) / 2.0) * self.scale
        return self.loc - half, self.loc + half

    def pit(self, y):
        return self.cdf(y)

    def contains(self, y, level):
        _check_level(level)
        u = self.pit(y)
        return np.abs(2.0 * u - 1.0) <= level

    def coverage(self, y, levels):
        centered = np.abs(2.0 * self.pit(y) - 1.0)
        for lv in levels:
            _check_level(lv)
        return np.array([(centered <= lv).mean() for lv in levels])


class StudentT(_LocationScale):
    """Location-scale Student-t with ``df`` degrees of freedom."""

    def __init__(self, loc, scale, df):
        self.loc, self.scale, self.df = np.broadcast_arrays(
            *(np.asarray(v, dtype=np.float64) for v in (loc, scale, df)))
        if np.any(self.scale <= 0) or np.any(self.df <= 0):
            raise DomainError("scale and df must be positive")

    @property
    def variance(self):
        if np.any(self.df <= 2):
            raise DomainError("variance requires df > 2")
        return self.scale**2 * self.df / (self.df - 2.0)

    def std(self):
        return np.sqrt(self.variance)

    def logpdf(self, y):
        z = (np.asarray(y, dtype=np.float64) - self.loc) / self.scale
        nu = self.df
        return (log_gamma((nu + 1.0) / 2.0) - log_gamma(nu / 2.0)
                - 0.5 * np.log(nu * np.pi) - np.log(self.scale)
                - (nu + 1.0) / 2.0 * np.log1p(z * z / nu))

    def _standard_cdf(self, z):
        return student_t_cdf(z, self.df)

    def _standard_ppf(self, p):
        return student_t_ppf(np.full(self.df.shape, p), self.df)

    def sample(self, rng, size=None):
        shape = self.loc.shape if size is None else (size,) + self.loc.shape
        return self.loc + self.scale * rng.standard_t(self.df, size=shape)

    def subset(self, idx):
        return StudentT(self.loc[idx], self.scale[idx], self.df[idx])


class Gaussian(_LocationScale):
    def __init__(self, loc, scale):
        self.loc, self.scale = np.broadcast_arrays(
            np.asarray(loc, dtype=np.float64), np.asarray(scale, dtype=np.float64))
        if np.any(self.scale <= 0):
            raise DomainError("scale must be positive")

    def std(self):
        return self.scale

    def _standard_cdf(self, z):
        return special.ndtr(z)

    def _standard_ppf(self, p):
        return np.full(self.loc.shape, special.ndtri(p))

    def sample(self, rng, size=None):
        shape = self.loc.shape if size is None else (size,) + self.loc.shape
        return self.loc + self.scale * rng.standard_normal(shape)

    def subset(self, idx):
        return Gaussian(self.loc[idx], self.scale[idx])


class Empirical(PredictiveDistribution):
    """Sample-based distribution; ``samples`` has shape ``(n_samples, N, h)``.

    The spread is the sample standard deviation (``ddof=1``); intervals use
    order statistics at ranks ``ceil((1 -/+ level)/2 * n)``.
    """

    def __init__(self, samples):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 3 or samples.shape[0] < 2:
            raise ValueError("samples must have shape (n_samples >= 2, N, h)")
        self.samples = samples
        self._sorted = None

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def mean(self):
        return self.samples.mean(axis=0)

    def std(self):
        return self.samples.std(axis=0, ddof=1)

    def cdf(self, y):
        return (self.samples <= np.asarray(y, dtype=np.float64)).mean(axis=0)

    def _order(self):
        if self._sorted is None:
            self._sorted = np.sort(self.samples, axis=0)
        return self._sorted

    def interval(self, level):
        r_lo, r_hi = order_statistic_ranks(self.n_samples, level)
        s = self._order()
        return s[r_lo - 1], s[r_hi - 1]

    def event_probability(self, threshold, direction="below", aggregate="max"):
        # A sample path crosses if any of its steps does.
        if direction == "below":
            hit = self.samples.min(axis=2) < threshold
        elif direction == "above":
            hit = self.samples.max(axis=2) > threshold
        else:
            raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")
        return hit.mean(axis=0)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        pick = rng.integers(0, self.n_samples, size=(n,) + self.samples.shape[1:])
        out = np.take_along_axis(self.samples, pick, axis=0)
        return out[0] if size is None else out

    def subset(self, idx):
        return Empirical(self.samples[:, idx])

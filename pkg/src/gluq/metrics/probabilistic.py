"""Event-detection and calibration scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..exceptions import DomainError, SizeError, UndefinedMetricError

__all__ = [
    "DEFAULT_LEVELS",
    "CalibrationCurve",
    "brier",
    "sensitivity",
    "pr_curve",
    "pr_auc",
    "sensitivity_and_pr_auc",
    "interval_flags",
    "spearman",
    "coverage_curve",
]

DEFAULT_LEVELS = np.round(np.arange(1, 20) * 0.05, 10)


def _binary(y):
    y = np.asarray(y).ravel()
    if y.dtype == bool:
        return y
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("occurrences must be 0/1")
    return y.astype(bool)


def brier(probs, occurrences) -> float:
    """Mean squared difference between event probabilities and 0/1 outcomes."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = _binary(occurrences)
    if p.shape != y.shape:
        raise ValueError(f"probs and occurrences lengths differ: {p.size} vs {y.size}")
    if p.size == 0:
        raise SizeError("Brier score of an empty sample")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DomainError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def sensitivity(scores, occurrences, threshold=0.5) -> float:
    """True-positive rate. Boolean ``scores`` are used as flags directly;
    numeric scores flag an event when ``score >= threshold``."""
    s = np.asarray(scores).ravel()
    y = _binary(occurrences)
    flags = s if s.dtype == bool else s.astype(np.float64) >= threshold
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("sensitivity is undefined without positive occurrences")
    return float(np.count_nonzero(flags & y) / n_pos)


def pr_curve(scores, occurrences, thresholds=None):
    """Precision and recall at each threshold (descending), flagging ``score >= t``.

    Returns ``(precision, recall, thresholds)``; defaults to the unique scores.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary(occurrences)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("precision-recall curve is undefined without positives")
    t = np.unique(s) if thresholds is None else np.unique(np.asarray(thresholds, dtype=np.float64))
    t = t[::-1]
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp_cum = np.cumsum(y_sorted)
    # number of scores >= t for each threshold (s_sorted is descending)
    k = np.searchsorted(-s_sorted, -t, side="right")
    tp = np.where(k > 0, tp_cum[np.maximum(k - 1, 0)], 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(k > 0, tp / np.maximum(k, 1), 1.0)
    recall = tp / n_pos
    return precision, recall, t


def pr_auc(scores, occurrences, thresholds=None) -> float:
    """Step-wise area: ``sum_n (R_n - R_{n-1}) P_n`` over descending thresholds."""
    precision, recall, _ = pr_curve(scores, occurrences, thresholds)
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def sensitivity_and_pr_auc(scores, occurrences, threshold=0.5):
    """``(sensitivity, PR-AUC)``; boolean flags (plain models) report ``None`` for AUC."""
    s = np.asarray(scores)
    sens = sensitivity(s, occurrences, threshold)
    if s.dtype == bool:
        return sens, None
    return sens, pr_auc(s, occurrences)


def interval_flags(lower, upper, threshold, direction="below") -> np.ndarray:
    """Flag a window when any step's interval reaches past ``threshold``."""
    if direction == "below":
        return np.asarray(lower).min(axis=1) < threshold
    if direction == "above":
        return np.asarray(upper).max(axis=1) > threshold
    raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")


def spearman(u, v) -> float:
    """Spearman rank correlation with average ranks for ties."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"inputs differ in length: {u.size} vs {v.size}")
    if u.size < 3:
        raise SizeError("Spearman correlation needs at least 3 pairs")
    ru, rv = rankdata(u) - (u.size + 1) / 2.0, rankdata(v) - (v.size + 1) / 2.0
    den = np.sqrt(np.dot(ru, ru) * np.dot(rv, rv))
    if den == 0:
        raise UndefinedMetricError("Spearman correlation is undefined for a constant input")
    return float(np.clip(np.dot(ru, rv) / den, -1.0, 1.0))


@dataclass(frozen=True)
class CalibrationCurve:
    levels: np.ndarray
    coverage: np.ndarray
    mce: float


def coverage_curve(distribution, observations, levels=DEFAULT_LEVELS) -> CalibrationCurve:
    """Empirical coverage of central intervals, pooled over all (window, step) pairs."""
    y = np.asarray(observations, dtype=np.float64)
    if y.size == 0:
        raise SizeError("coverage of an empty sample")
    levels = np.asarray(levels, dtype=np.float64)
    ecp = np.asarray(distribution.coverage(y, levels), dtype=np.float64)
    return CalibrationCurve(levels, ecp, float(np.mean(np.abs(ecp - levels))))

"""Rank-based tests for comparing conditions across patients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2, rankdata

from ..exceptions import SizeError

__all__ = [
    "FriedmanResult",
    "WilcoxonResult",
    "friedman_test",
    "wilcoxon_signed_rank",
    "holm_adjust",
    "wilcoxon_holm",
    "MIN_NONZERO",
]

MIN_NONZERO = 6


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    pvalue: float
    kendall_w: float
    mean_ranks: np.ndarray


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    n: int  # non-zero differences used
    pvalue: float


def friedman_test(scores, lower_is_better=True) -> FriedmanResult:
    """Friedman test on a ``(patients, conditions)`` matrix.

    Ranks are taken within each row (rank 1 = best), ties get average ranks
    and the statistic carries the usual tie correction. Kendall's
    ``W = chi2 / (n (k - 1))``.
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise SizeError(f"need at least 2 patients and 2 conditions, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("score matrix contains non-finite values")
    n, k = x.shape
    ranks = rankdata(x if lower_is_better else -x, axis=1)
    rank_sums = ranks.sum(axis=0)
    ties = 0.0
    for row in x:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    correction = 1.0 - ties / (n * (k ** 3 - k))
    if correction <= 0:
        stat = 0.0
    else:
        stat = (12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)) / correction
        stat = max(float(stat), 0.0)
    return FriedmanResult(
        statistic=stat,
        pvalue=float(chi2.sf(stat, k - 1)),
        kendall_w=stat / (n * (k - 1)),
        mean_ranks=ranks.mean(axis=0),
    )


def _exact_pvalue(ranks, w_plus):
    """Two-sided p by enumerating all sign assignments of the ranks."""
    n = ranks.size
    if n > 20:
        raise SizeError("exact enumeration is limited to 20 non-zero differences")
    # doubled ranks are integers even with average-rank ties
    r2 = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(r2.sum()) + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r else counts
        counts = counts + shifted
    dist = counts / counts.sum()
    obs = int(round(2 * w_plus))
    lower = dist[: obs + 1].sum()
    upper = dist[obs:].sum()
    return float(min(1.0, 2.0 * min(lower, upper)))


def wilcoxon_signed_rank(differences, method="approx") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes get average ranks.
    ``method="approx"`` uses the normal approximation with tie variance
    correction and a continuity correction; ``method="exact"`` enumerates
    the null distribution.
    """
    d = np.asarray(differences, dtype=np.float64).ravel()
    d = d[d != 0]
    n = d.size
    if n < MIN_NONZERO:
        raise SizeError(f"need at least {MIN_NONZERO} non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if method == "exact":
        p = _exact_pvalue(ranks, w_plus)
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, t = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(t ** 3 - t) / 48.0
        gap = abs(w_plus - mean)
        z = max(gap - 0.5, 0.0) / np.sqrt(var)
        p = float(min(1.0, 2.0 * ndtr(-z)))
    else:
        raise ValueError(f"method must be 'approx' or 'exact', got {method!r}")
    return WilcoxonResult(stat, w_plus, w_minus, n, p)


def holm_adjust(pvalues) -> np.ndarray:
    """Holm step-down adjusted p-values, in the input order."""
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    m = p.size
    order = np.argsort(p, kind="mergesort")
    stepped = (m - np.arange(m)) * p[order]
    adjusted = np.minimum(np.maximum.accumulate(stepped), 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out


def wilcoxon_holm(pairs, m=None, method="approx"):
    """Pairwise signed-rank tests with Holm adjustment.

    ``pairs`` maps a comparison label to its per-patient differences.
    ``m`` is the family size (defaults to the number of pairs). Returns a
    list of ``(label, WilcoxonResult, adjusted_p)`` in input order.
    """
    labels = list(pairs)
    results = [wilcoxon_signed_rank(pairs[k], method=method) for k in labels]
    raw = np.array([r.pvalue for r in results])
    m = len(labels) if m is None else int(m)
    if m < len(labels):
        raise ValueError(f"family size m={m} is smaller than the number of comparisons")
    if m == len(labels):
        adj = holm_adjust(raw)
    else:
        # untested comparisons are treated as the largest p-values
        adj = holm_adjust(np.concatenate([raw, np.ones(m - len(labels))]))[: len(labels)]
    return [(k, r, float(a)) for k, r, a in zip(labels, results, adj)]

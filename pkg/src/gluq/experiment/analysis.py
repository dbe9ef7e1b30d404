"""Per-patient comparison of input feature sets."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..exceptions import MissingCellError, SizeError
from ..metrics import friedman_test, holm_adjust, wilcoxon_signed_rank
from ..metrics.stats import FriedmanResult

__all__ = ["PairwiseRow", "FeatureAnalysis", "score_matrix", "per_patient_analysis"]


@dataclass(frozen=True)
class PairwiseRow:
    first: str
    second: str
    statistic: float | None
    pvalue: float
    adjusted: float
    note: str = ""


@dataclass(frozen=True)
class FeatureAnalysis:
    metric: str
    conditions: tuple
    patients: tuple
    friedman: FriedmanResult
    pairwise: tuple

    def summary_rows(self):
        f = self.friedman
        rows = [("friedman", "chi2", f.statistic), ("friedman", "p", f.pvalue), ("friedman", "W", f.kendall_w)]
        rows += [("mean_rank", c, r) for c, r in zip(self.conditions, f.mean_ranks)]
        return rows


def score_matrix(scores, conditions=None, patients=None):
    """``{condition: {patient: value}}`` -> ``(patients, conditions)`` array.

    Raises :class:`MissingCellError` naming the first absent cell.
    """
    conditions = tuple(sorted(scores) if conditions is None else conditions)
    if patients is None:
        patients = sorted({p for c in conditions for p in scores.get(c, {})})
    patients = tuple(patients)
    out = np.empty((len(patients), len(conditions)))
    for j, c in enumerate(conditions):
        col = scores.get(c, {})
        for i, p in enumerate(patients):
            v = col.get(p)
            if v is None or not np.isfinite(v):
                raise MissingCellError(f"no {c!r} score for patient {p!r}")
            out[i, j] = v
    return out, conditions, patients


def per_patient_analysis(scores, metric="MARD", lower_is_better=True, conditions=None) -> FeatureAnalysis:
    """Friedman test across conditions plus Holm-adjusted pairwise signed-rank tests.

    A pair with fewer than six non-zero differences has no usable test; it
    is reported with ``p = 1`` and a note instead of failing the analysis.
    """
    matrix, conditions, patients = score_matrix(scores, conditions)
    result = friedman_test(matrix, lower_is_better=lower_is_better)
    pairs, raw = [], []
    for a, b in combinations(range(len(conditions)), 2):
        d = matrix[:, a] - matrix[:, b]
        try:
            w = wilcoxon_signed_rank(d)
            pairs.append((conditions[a], conditions[b], w.statistic, ""))
            raw.append(w.pvalue)
        except SizeError as exc:
            pairs.append((conditions[a], conditions[b], None, str(exc)))
            raw.append(1.0)
    adjusted = holm_adjust(raw) if raw else np.array([])
    rows = tuple(PairwiseRow(a, b, s, p, float(q), note)
                 for (a, b, s, note), p, q in zip(pairs, raw, adjusted))
    return FeatureAnalysis(metric, conditions, patients, result, rows)

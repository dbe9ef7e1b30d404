"""Write evaluation results as plain CSV / JSON / markdown files.

File layout is documented in ``docs/output_schema.md``. Floats are written
with ``repr`` so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics.report import markdown_table, to_json, write_csv

__all__ = ["emit_outputs", "write_rows", "write_training_log"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, np.datetime64):
        return str(np.datetime_as_string(v, unit="m"))
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_training_log(path, log):
    Path(path).write_text(log.to_csv(), encoding="utf-8")


def _pr_rows(evaluations):
    for cell, ev in evaluations.items():
        for event, (precision, recall, thresholds) in sorted(ev.pr_curves.items()):
            for p, r, t in zip(precision, recall, thresholds):
                yield cell, event, t, p, r


def _coverage_rows(evaluations):
    for cell, ev in evaluations.items():
        if ev.calibration is None:
            continue
        for lvl, ecp in zip(ev.calibration.levels, ev.calibration.coverage):
            yield cell, lvl, ecp


def emit_outputs(output_dir, reports, evaluations=None, forecasts=None, per_patient=None, test_targets=None):
    """Write every result file into ``output_dir`` and return the written paths.

    Parameters
    ----------
    reports : list of MetricsReport
    evaluations : dict, optional
        Cell name -> :class:`Evaluation`, for PR / coverage / grid data.
    forecasts : dict, optional
        Cell name -> list of :class:`RollingForecast`.
    per_patient : dict, optional
        Metric name -> ``{condition: {patient: value}}`` matrices.
    test_targets : ndarray, optional
        ``(N, h)`` observed mg/dL, paired with each evaluation's mean for
        the error-grid scatter.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    put("report.csv", write_csv(reports))
    put("report.json", to_json(reports))
    put("report.md", markdown_table(reports))

    evaluations = evaluations or {}
    if evaluations:
        p = out / "pr_curves.csv"
        write_rows(p, ("cell", "event", "threshold", "precision", "recall"), _pr_rows(evaluations))
        written.append(p)
        p = out / "coverage.csv"
        write_rows(p, ("cell", "nominal", "empirical"), _coverage_rows(evaluations))
        written.append(p)
        if test_targets is not None:
            for cell, ev in evaluations.items():
                p = out / f"grid_{cell.replace('/', '_')}.csv"
                ref = np.asarray(test_targets)
                rows = ((i, k + 1, ref[i, k], ev.mean[i, k], ev.zones[i, k])
                        for i in range(ref.shape[0]) for k in range(ref.shape[1]))
                write_rows(p, ("window", "step", "reference", "predicted", "zone"), rows)
                written.append(p)

    for cell, items in (forecasts or {}).items():
        for fc in items:
            p = out / f"rolling_{cell.replace('/', '_')}_{fc.patient_id}.csv"
            rows = zip(fc.timestamps, fc.measured, fc.mean, fc.lower, fc.upper, fc.n_windows,
                       [("" if np.isnan(m) else int(c)) for m, c in zip(fc.mean, fc.covered)])
            write_rows(p, ("timestamp", "measured", "mean", "lower", "upper", "n_windows", "covered"), rows)
            written.append(p)

    for metric, matrix in (per_patient or {}).items():
        conditions = sorted(matrix)
        patients = sorted({pid for col in matrix.values() for pid in col})
        p = out / f"per_patient_{metric}.csv"
        write_rows(p, ("patient",) + tuple(conditions),
                   ([pid] + [matrix[c].get(pid) for c in conditions] for pid in patients))
        written.append(p)
    return written


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")

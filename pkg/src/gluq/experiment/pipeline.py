"""Data preparation, training, evaluation and rolling forecasts for one experiment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import (
    HYPER_THRESHOLD,
    HYPO_THRESHOLD,
    WindowedDataset,
    chronological_split,
    label_events,
    load_cgm_csv,
    make_windows,
    zscore_apply,
    zscore_fit,
)
from ..estimators import BayesianRidgeForecaster, SequenceForecaster
from ..exceptions import StateError, UndefinedMetricError
from ..metrics import (
    builtin_grid,
    brier,
    coverage_curve,
    grid_classify,
    interval_flags,
    load_grid,
    mard,
    pr_curve,
    sensitivity,
    sensitivity_and_pr_auc,
    spearman,
    zone_a_fraction,
    zone_codes,
)
from ..metrics.report import MetricsReport
from ..synthetic import synthetic_series
from .config import RIDGE, Cell, ExperimentConfig

__all__ = [
    "PreparedData",
    "Evaluation",
    "RollingForecast",
    "load_series",
    "prepare_data",
    "make_estimator",
    "train",
    "evaluate",
    "rolling_forecast",
    "resolve_grid",
    "INTERVAL_LEVEL",
]

INTERVAL_LEVEL = 0.9545  # central mass within +-2 sigma of a Gaussian


@dataclass(frozen=True)
class PreparedData:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    normalization: object
    test_series: tuple  # normalized per-patient test segments

    @property
    def glucose_mean(self):
        return self.normalization.mean["glucose"]

    @property
    def glucose_std(self):
        return self.normalization.std["glucose"]


def resolve_grid(name):
    return builtin_grid(name) if name in ("dts", "clarke") else load_grid(name)


def load_series(config: ExperimentConfig):
    if config.synthetic_patients > 0:
        return [synthetic_series(config.synthetic_length, f"synthetic-{i:02d}", config.feature,
                                 seed=config.seed * 1000 + i)
                for i in range(config.synthetic_patients)]
    return [load_cgm_csv(p, config.columns, config.feature) for p in config.data_files()]


def prepare_data(series, horizon) -> PreparedData:
    """Split each patient 60/20/20 in time, z-score on pooled training parts, window."""
    splits = [chronological_split(s) for s in series]
    params = zscore_fit([tr for tr, _, _ in splits])
    parts = {"train": [], "val": [], "test": []}
    tests = []
    for tr, va, te in splits:
        for key, seg in zip(("train", "val", "test"), (tr, va, te)):
            parts[key].append(make_windows(zscore_apply(seg, params), horizon))
        tests.append(zscore_apply(te, params))
    return PreparedData(
        WindowedDataset.concat(parts["train"]),
        WindowedDataset.concat(parts["val"]),
        WindowedDataset.concat(parts["test"]),
        params,
        tuple(tests),
    )


def make_estimator(cell: Cell, config: ExperimentConfig, data: PreparedData):
    norm = dict(normalize=False, target_mean=data.glucose_mean, target_std=data.glucose_std)
    if cell.architecture == RIDGE:
        return BayesianRidgeForecaster(**norm)
    return SequenceForecaster(
        architecture=cell.architecture, head=cell.head, horizon=config.horizon,
        epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
        dropout=config.dropout if cell.head == "dropout" else None, kl_coef=config.kl_coef,
        beta_r=config.beta_r, mc_samples=config.mc_samples, seed=config.seed, **norm)


def train(config: ExperimentConfig, cell: Cell, data: PreparedData, callback=None):
    """Fit one cell; returns ``(estimator, training log or None for ridge)``."""
    est = make_estimator(cell, config, data)
    if cell.architecture == RIDGE:
        est.fit(data.train.inputs, data.train.targets)
        return est, None
    est.fit(data.train.inputs, data.train.targets, data.val.inputs, data.val.targets, callback=callback)
    return est, est.training_log_


@dataclass(frozen=True)
class Evaluation:
    report: MetricsReport
    mean: np.ndarray  # (N, h) mg/dL
    zones: np.ndarray  # (N, h) letters
    distribution: object | None
    pr_curves: dict  # event -> (precision, recall, thresholds)
    calibration: object | None


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def evaluate(estimator, dataset: WindowedDataset, grid, cell="model", detection="probability") -> Evaluation:
    """Score a fitted estimator on labeled windows (all mg/dL metrics pooled over steps).

    Point-forecast models report zA, MARD and the crossing sensitivities only.
    Statistics that are undefined on this data (no events, constant zones)
    are left blank.
    """
    if not dataset.labeled:
        raise StateError("evaluation needs labeled windows (targets)")
    y = dataset.targets
    probabilistic = not (isinstance(estimator, SequenceForecaster) and estimator.head == "plain")
    dist = estimator.predict_distribution(dataset.inputs) if probabilistic else None
    mean = dist.mean() if probabilistic else estimator.predict(dataset.inputs)
    zones = grid_classify(y, mean, grid).reshape(y.shape)
    events = label_events(dataset)
    metrics = {"zA": zone_a_fraction(zones), "MARD": mard(mean, y)}
    curves, calibration = {}, None
    if not probabilistic:
        metrics["S70"] = _safe(sensitivity, mean.min(axis=1) < HYPO_THRESHOLD, events.hypo)
        metrics["S180"] = _safe(sensitivity, mean.max(axis=1) > HYPER_THRESHOLD, events.hyper)
    else:
        lo = hi = None
        if detection == "interval":
            lo, hi = dist.interval(INTERVAL_LEVEL)
        for label, thr, direction, occ in (("70", HYPO_THRESHOLD, "below", events.hypo),
                                           ("180", HYPER_THRESHOLD, "above", events.hyper)):
            prob = dist.event_probability(thr, direction)
            metrics["B" + label] = brier(prob, occ)
            both = _safe(sensitivity_and_pr_auc, prob, occ)
            sens, auc = both if both is not None else (None, None)
            if detection == "interval":
                sens = _safe(sensitivity, interval_flags(lo, hi, thr, direction), occ)
            metrics["S" + label], metrics["A" + label] = sens, auc
            pr = _safe(pr_curve, prob, occ)
            if pr is not None:
                curves[label] = pr
        calibration = coverage_curve(dist, y)
        metrics["MCE"] = calibration.mce
        u = dist.window_uncertainty()
        metrics["rho"] = _safe(spearman, u, np.abs(mean - y).mean(axis=1))
        final_zone = zone_codes(grid_classify(y[:, -1], mean[:, -1], grid))
        metrics["rho_z"] = _safe(spearman, u, final_zone)
    return Evaluation(MetricsReport(cell=str(cell), **metrics), mean, zones, dist, curves, calibration)


@dataclass(frozen=True)
class RollingForecast:
    """Per-timestep averages over every overlapping forecast window (mg/dL).

    The first 36 timesteps have no forecast and hold NaN.
    """

    patient_id: str
    timestamps: np.ndarray
    measured: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_windows: np.ndarray

    @property
    def covered(self):
        with np.errstate(invalid="ignore"):
            return (self.lower <= self.measured) & (self.measured <= self.upper)


def rolling_forecast(estimator, series, horizon) -> RollingForecast:
    """Average forecasts and +-2 sigma bands over all windows covering each timestep."""
    windows = make_windows(series, horizon)
    probabilistic = not (isinstance(estimator, SequenceForecaster) and estimator.head == "plain")
    if probabilistic:
        dist = estimator.predict_distribution(windows.inputs)
        pred, sigma = dist.mean(), dist.std()
    else:
        pred = estimator.predict(windows.inputs)
        sigma = np.zeros_like(pred)
    n = len(series)
    t = (windows.end_index[:, None] + 1 + np.arange(horizon)[None, :]).ravel()
    count = np.bincount(t, minlength=n).astype(np.float64)
    sums = {k: np.bincount(t, weights=v.ravel(), minlength=n)
            for k, v in (("mean", pred), ("lower", pred - 2 * sigma), ("upper", pred + 2 * sigma))}
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = {k: np.where(count > 0, s / np.maximum(count, 1), np.nan) for k, s in sums.items()}
    measured = series.glucose_mgdl if series.glucose_mgdl is not None else series.channels["glucose"]
    return RollingForecast(series.patient_id, series.timestamps, np.asarray(measured, dtype=np.float64),
                           avg["mean"], avg["lower"], avg["upper"], count.astype(np.int64))

"""CGM series ingestion, chronological splitting, z-scoring and windowing."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataFormatError, DegenerateChannelError, SchemaError, SizeError

__all__ = [
    "SAMPLE_MINUTES",
    "WINDOW_LENGTH",
    "HYPO_THRESHOLD",
    "HYPER_THRESHOLD",
    "FEATURE_CHOICES",
    "DEFAULT_COLUMN_MAP",
    "GlucoseSeries",
    "NormalizationParams",
    "WindowedDataset",
    "EventLabels",
    "load_cgm_csv",
    "chronological_split",
    "zscore_fit",
    "zscore_apply",
    "make_windows",
    "label_events",
]

SAMPLE_MINUTES = 5
WINDOW_LENGTH = 36
HYPO_THRESHOLD = 70.0
HYPER_THRESHOLD = 180.0
FEATURE_CHOICES = ("heart_rate", "steps", "calories", "basal")
BASE_CHANNELS = ("glucose", "bolus", "carbs")

# Column names of the preprocessed HUPA-UCM release.
DEFAULT_COLUMN_MAP = {
    "time": "time",
    "glucose": "glucose",
    "bolus": "bolus_volume_delivered",
    "carbs": "carb_input",
    "heart_rate": "heart_rate",
    "steps": "steps",
    "calories": "calories",
    "basal": "basal_rate",
}

_STEP = np.timedelta64(SAMPLE_MINUTES, "m")


@dataclass(frozen=True)
class GlucoseSeries:
    """One patient's multichannel series on a uniform 5-minute grid.

    ``channels`` is ordered: glucose (mg/dL), bolus, carbs, then the fourth
    feature. A normalized series keeps the exact raw glucose in
    ``glucose_mgdl`` so forecast targets never pass through a round trip.
    """

    patient_id: str
    timestamps: np.ndarray
    channels: dict
    normalization: "NormalizationParams | None" = None
    glucose_mgdl: np.ndarray | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[ns]")
        object.__setattr__(self, "timestamps", ts)
        chans = {k: np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}
        object.__setattr__(self, "channels", chans)
        if "glucose" not in chans:
            raise SchemaError("glucose")
        lengths = {len(v) for v in chans.values()}
        if lengths != {len(ts)}:
            raise DataFormatError(f"channel lengths {sorted(lengths)} differ from {len(ts)} timestamps")
        bad = _first_bad_step(ts)
        if bad is not None:
            raise DataFormatError(f"non-uniform timestamp step at row {bad}", row=bad)
        if self.normalization is None and np.any(chans["glucose"] <= 0):
            raise DataFormatError("glucose values must be strictly positive")
        if self.glucose_mgdl is None and self.normalization is None:
            object.__setattr__(self, "glucose_mgdl", chans["glucose"])

    def __len__(self):
        return len(self.timestamps)

    @property
    def feature_names(self) -> list[str]:
        return list(self.channels)

    def matrix(self) -> np.ndarray:
        """Channels stacked as ``(L, n_channels)``."""
        return np.column_stack([self.channels[k] for k in self.channels])

    def slice(self, start, stop) -> "GlucoseSeries":
        raw = None if self.glucose_mgdl is None else self.glucose_mgdl[start:stop]
        return replace(
            self,
            timestamps=self.timestamps[start:stop],
            channels={k: v[start:stop] for k, v in self.channels.items()},
            glucose_mgdl=raw,
        )


def _first_bad_step(ts):
    if len(ts) < 2:
        return None
    bad = np.flatnonzero(np.diff(ts) != _STEP)
    return int(bad[0]) + 1 if bad.size else None


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel mean and sample standard deviation (channel units)."""

    mean: dict
    std: dict

    def __post_init__(self):
        for name, s in self.std.items():
            if not np.isfinite(s) or s <= 0:
                raise DegenerateChannelError(f"channel {name!r} has zero variance")

    @classmethod
    def identity(cls, names) -> "NormalizationParams":
        return cls({n: 0.0 for n in names}, {n: 1.0 for n in names})

    def normalize(self, name, values):
        return (np.asarray(values, dtype=np.float64) - self.mean[name]) / self.std[name]

    def denormalize(self, name, values):
        return np.asarray(values, dtype=np.float64) * self.std[name] + self.mean[name]

    def to_dict(self):
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls({k: float(v) for k, v in d["mean"].items()}, {k: float(v) for k, v in d["std"].items()})


@dataclass(frozen=True)
class WindowedDataset:
    """Input windows ``(N, 36, F)`` paired with ``(N, h)`` glucose targets in mg/dL.

    ``origins`` holds the timestamp of each window's last input sample and
    ``end_index`` its row index in the source series.
    """

    inputs: np.ndarray
    targets: np.ndarray | None
    horizon: int
    origins: np.ndarray
    end_index: np.ndarray
    patient_ids: np.ndarray = field(default_factory=lambda: np.array([], dtype=object))

    def __len__(self):
        return len(self.inputs)

    @property
    def labeled(self) -> bool:
        return self.targets is not None

    @classmethod
    def concat(cls, parts) -> "WindowedDataset":
        parts = list(parts)
        if not parts:
            raise SizeError("nothing to concatenate")
        horizons = {p.horizon for p in parts}
        if len(horizons) != 1:
            raise ValueError(f"mixed horizons {sorted(horizons)}")
        targets = None if any(p.targets is None for p in parts) else np.concatenate([p.targets for p in parts])
        return cls(
            inputs=np.concatenate([p.inputs for p in parts]),
            targets=targets,
            horizon=parts[0].horizon,
            origins=np.concatenate([p.origins for p in parts]),
            end_index=np.concatenate([p.end_index for p in parts]),
            patient_ids=np.concatenate([p.patient_ids for p in parts]),
        )

    def subset(self, idx) -> "WindowedDataset":
        return WindowedDataset(
            inputs=self.inputs[idx],
            targets=None if self.targets is None else self.targets[idx],
            horizon=self.horizon,
            origins=self.origins[idx],
            end_index=self.end_index[idx],
            patient_ids=self.patient_ids[idx],
        )


@dataclass(frozen=True)
class EventLabels:
    hypo: np.ndarray
    hyper: np.ndarray


def load_cgm_csv(path, column_map=None, feature="heart_rate", patient_id=None, sep=","):
    """Read one patient's CSV into a validated :class:`GlucoseSeries`.

    ``column_map`` maps channel roles (``time``, ``glucose``, ``bolus``,
    ``carbs`` and the chosen ``feature``) to header names; unspecified roles
    fall back to :data:`DEFAULT_COLUMN_MAP`.
    """
    if feature not in FEATURE_CHOICES:
        raise ValueError(f"feature must be one of {FEATURE_CHOICES}, got {feature!r}")
    cmap = {**DEFAULT_COLUMN_MAP, **(column_map or {})}
    path = Path(path)
    frame = pd.read_csv(path, sep=sep, encoding="utf-8")
    roles = ("time",) + BASE_CHANNELS + (feature,)
    for role in roles:
        if cmap[role] not in frame.columns:
            raise SchemaError(role, f"missing column for {role!r}: expected header {cmap[role]!r}")
    ts = pd.to_datetime(frame[cmap["time"]]).to_numpy(dtype="datetime64[ns]")
    bad = _first_bad_step(ts)
    if bad is not None:
        raise DataFormatError(f"{path.name}: timestamp step is not {SAMPLE_MINUTES} min at row {bad}", row=bad)
    channels = {}
    for role in BASE_CHANNELS + (feature,):
        values = pd.to_numeric(frame[cmap[role]], errors="coerce").to_numpy(dtype=np.float64)
        nonfinite = np.flatnonzero(~np.isfinite(values))
        if nonfinite.size:
            row = int(nonfinite[0])
            raise DataFormatError(f"{path.name}: non-finite {role!r} value at row {row}", row=row)
        channels[role] = values
    return GlucoseSeries(patient_id or path.stem, ts, channels)


def chronological_split(series: GlucoseSeries):
    """Contiguous 60/20/20 split with lengths ``floor(.6L), floor(.2L)``, remainder."""
    n = len(series)
    if n < 5:
        raise SizeError(f"series of length {n} is too short to split (need >= 5)")
    n_train = (6 * n) // 10
    n_val = (2 * n) // 10
    return (
        series.slice(0, n_train),
        series.slice(n_train, n_train + n_val),
        series.slice(n_train + n_val, n),
    )


def zscore_fit(train) -> NormalizationParams:
    """Fit per-channel mean / sample std on one training series or a pooled list."""
    parts = [train] if isinstance(train, GlucoseSeries) else list(train)
    if not parts:
        raise SizeError("no training series")
    names = parts[0].feature_names
    mean, std = {}, {}
    for name in names:
        values = np.concatenate([p.channels[name] for p in parts])
        if values.size < 2:
            raise SizeError("need at least two samples to estimate a standard deviation")
        mean[name] = float(values.mean())
        std[name] = float(values.std(ddof=1))
        if std[name] == 0.0:
            raise DegenerateChannelError(f"channel {name!r} has zero variance")
    return NormalizationParams(mean, std)


def zscore_apply(series: GlucoseSeries, params: NormalizationParams) -> GlucoseSeries:
    channels = {k: params.normalize(k, v) for k, v in series.channels.items()}
    raw = series.glucose_mgdl if series.glucose_mgdl is not None else series.channels["glucose"]
    return replace(series, channels=channels, normalization=params, glucose_mgdl=raw)


def make_windows(series: GlucoseSeries, horizon: int) -> WindowedDataset:
    """Stride-1 windows of 36 samples with the next ``horizon`` glucose values as targets."""
    n = len(series)
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if n < WINDOW_LENGTH + horizon:
        raise SizeError(f"series of length {n} is shorter than {WINDOW_LENGTH} + {horizon}")
    count = n - WINDOW_LENGTH - horizon + 1
    data = series.matrix()
    glucose = series.glucose_mgdl if series.glucose_mgdl is not None else series.channels["glucose"]
    win = np.lib.stride_tricks.sliding_window_view(data, WINDOW_LENGTH, axis=0)[:count]
    inputs = np.ascontiguousarray(np.swapaxes(win, 1, 2))
    tgt = np.lib.stride_tricks.sliding_window_view(glucose[WINDOW_LENGTH:], horizon)[:count]
    end = np.arange(WINDOW_LENGTH - 1, WINDOW_LENGTH - 1 + count)
    return WindowedDataset(
        inputs=inputs,
        targets=np.array(tgt, dtype=np.float64),
        horizon=horizon,
        origins=series.timestamps[end],
        end_index=end,
        patient_ids=np.full(count, series.patient_id, dtype=object),
    )


def label_events(dataset: WindowedDataset) -> EventLabels:
    """Any-step hypo (< 70 mg/dL) and hyper (> 180 mg/dL) flags per window."""
    y = dataset.targets
    return EventLabels(hypo=y.min(axis=1) < HYPO_THRESHOLD, hyper=y.max(axis=1) > HYPER_THRESHOLD)

"""Synthetic CGM data with a known, heteroscedastic noise process.

Two generators:

* :class:`HeteroscedasticProcess` draws independent windows. Each window
  follows a linear glucose trend, and the forecast noise grows with the
  window's heart rate, so a model can only be calibrated if it learns to
  use that channel. The true predictive distribution of every target is
  available for comparison.
* :func:`synthetic_series` builds a continuous multi-day series (daily
  cycle, meals, activity bouts) for exercising the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import DEFAULT_COLUMN_MAP, FEATURE_CHOICES, SAMPLE_MINUTES, WINDOW_LENGTH, GlucoseSeries, WindowedDataset
from .distributions import Gaussian

__all__ = ["HeteroscedasticProcess", "synthetic_series", "write_cgm_csv", "CGM_FLOOR"]

CGM_FLOOR = 40.0  # sensors report nothing lower
_EPOCH = np.datetime64("2024-01-01T00:00", "ns")


@dataclass(frozen=True)
class HeteroscedasticProcess:
    """Linear-trend windows with heart-rate dependent Gaussian noise.

    For a window with level ``L`` (last observed glucose), slope ``s`` per
    step and mean heart rate ``hr``, target step ``k = 1..h`` is

        y_k = L + s k + sigma(hr) (1 + step_growth (k - 1)) eps_k

    with ``sigma(hr) = noise_base + noise_per_bpm * (hr - 60)`` and
    ``eps_k ~ N(0, 1)``; readings are floored at 40 mg/dL.
    """

    level_range: tuple = (70.0, 260.0)
    slope_sd: float = 1.5
    hr_range: tuple = (55.0, 150.0)
    noise_base: float = 3.0
    noise_per_bpm: float = 0.25
    step_growth: float = 0.1
    history_noise: float = 1.0

    def noise_scale(self, heart_rate, horizon):
        base = self.noise_base + self.noise_per_bpm * (np.asarray(heart_rate, dtype=np.float64) - 60.0)
        growth = 1.0 + self.step_growth * np.arange(horizon)
        return base[:, None] * growth[None, :]

    def _latent(self, n, rng):
        level = rng.uniform(*self.level_range, size=n)
        slope = rng.normal(0.0, self.slope_sd, size=n)
        hr = rng.uniform(*self.hr_range, size=n)
        return level, slope, hr

    def sample(self, n, horizon=6, seed=0):
        """Draw ``n`` windows; returns ``(dataset, true_distribution)`` in mg/dL."""
        rng = np.random.default_rng(seed)
        level, slope, hr = self._latent(n, rng)
        t = np.arange(WINDOW_LENGTH) - (WINDOW_LENGTH - 1)
        glucose = level[:, None] + slope[:, None] * t[None, :]
        glucose = glucose + rng.normal(0.0, self.history_noise, size=glucose.shape)
        glucose = np.maximum(glucose, CGM_FLOOR)
        heart = hr[:, None] + rng.normal(0.0, 2.0, size=(n, WINDOW_LENGTH))
        bolus = np.where(rng.uniform(size=(n, WINDOW_LENGTH)) < 0.02,
                         rng.uniform(1.0, 6.0, size=(n, WINDOW_LENGTH)), 0.0)
        carbs = np.where(rng.uniform(size=(n, WINDOW_LENGTH)) < 0.02,
                         rng.uniform(10.0, 60.0, size=(n, WINDOW_LENGTH)), 0.0)
        inputs = np.stack([glucose, bolus, carbs, heart], axis=-1)

        k = np.arange(1, horizon + 1)
        loc = level[:, None] + slope[:, None] * k[None, :]
        scale = self.noise_scale(hr, horizon)
        targets = np.maximum(loc + scale * rng.standard_normal((n, horizon)), CGM_FLOOR)

        origins = _EPOCH + np.arange(n) * np.timedelta64(SAMPLE_MINUTES, "m")
        dataset = WindowedDataset(
            inputs=inputs,
            targets=targets,
            horizon=horizon,
            origins=origins,
            end_index=np.arange(n),
            patient_ids=np.full(n, "synthetic", dtype=object),
        )
        return dataset, Gaussian(loc, scale)


def synthetic_series(length=4000, patient_id="synthetic", feature="heart_rate", seed=0) -> GlucoseSeries:
    """A continuous 5-minute series with meals, boluses and activity bouts."""
    if feature not in FEATURE_CHOICES:
        raise ValueError(f"feature must be one of {FEATURE_CHOICES}, got {feature!r}")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    day = 288  # samples per day

    carbs = np.zeros(length)
    bolus = np.zeros(length)
    meals = np.flatnonzero(rng.uniform(size=length) < 3.0 / day)
    carbs[meals] = rng.uniform(20.0, 80.0, size=meals.size)
    bolus[meals] = carbs[meals] / rng.uniform(8.0, 15.0, size=meals.size)

    # meal response: carbs raise glucose over ~2 h, boluses pull it back
    kernel_t = np.arange(48)
    rise = kernel_t * np.exp(-kernel_t / 9.0)
    rise /= rise.sum()
    meal_effect = np.convolve(carbs * 3.5, rise)[:length] * 8.0
    insulin = np.convolve(bolus * 30.0, np.roll(rise, 6))[:length] * 8.0

    activity = np.zeros(length)
    bouts = np.flatnonzero(rng.uniform(size=length) < 1.5 / day)
    for b in bouts:
        activity[b:b + rng.integers(6, 18)] = rng.uniform(0.5, 1.0)
    heart = 68.0 + 55.0 * activity + rng.normal(0.0, 3.0, size=length)

    drift = np.zeros(length)
    for i in range(1, length):
        drift[i] = 0.985 * drift[i - 1] + rng.normal(0.0, 2.0)
    noise = rng.normal(size=length) * (2.0 + 0.12 * np.maximum(heart - 60.0, 0.0))
    glucose = (135.0 + 35.0 * np.sin(2 * np.pi * t / day) + meal_effect - insulin
               - 25.0 * activity + drift + noise)
    glucose = np.clip(glucose, CGM_FLOOR, 400.0)

    fourth = {
        "heart_rate": heart,
        "steps": np.maximum(0.0, np.round(400.0 * activity + rng.normal(0.0, 5.0, size=length))),
        "calories": 1.2 + 8.0 * activity + rng.normal(0.0, 0.1, size=length),
        "basal": np.full(length, 0.8) + 0.2 * np.sin(2 * np.pi * (t + 40) / day),
    }[feature]
    timestamps = _EPOCH + t * np.timedelta64(SAMPLE_MINUTES, "m")
    return GlucoseSeries(
        patient_id,
        timestamps,
        {"glucose": glucose, "bolus": bolus, "carbs": carbs, feature: fourth},
    )


def write_cgm_csv(series: GlucoseSeries, path, column_map=None) -> None:
    """Write a series in the CSV layout :func:`gluq.data.load_cgm_csv` reads."""
    cmap = {**DEFAULT_COLUMN_MAP, **(column_map or {})}
    frame = pd.DataFrame({cmap["time"]: pd.to_datetime(series.timestamps)})
    for name, values in series.channels.items():
        frame[cmap[name]] = values
    frame.to_csv(path, index=False)

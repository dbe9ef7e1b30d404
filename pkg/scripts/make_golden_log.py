"""Regenerate the archived learning curve used by the experiment tests.

Trains a plain LSTM on a noisy linear-trend series and writes the
per-epoch training log to ``tests/golden/linear_trend_lstm.csv``.
"""

from pathlib import Path

import numpy as np

from gluq import SequenceForecaster
from gluq.data import GlucoseSeries, make_windows

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden" / "linear_trend_lstm.csv"


def linear_trend_windows(n=168, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    series = GlucoseSeries(
        "trend",
        np.datetime64("2024-01-01T00:00") + t * np.timedelta64(5, "m"),
        {
            "glucose": 90.0 + 0.8 * t + rng.normal(0.0, 2.0, n),
            "bolus": rng.uniform(0.0, 1.0, n),
            "carbs": rng.uniform(0.0, 1.0, n),
            "heart_rate": 70.0 + rng.normal(0.0, 3.0, n),
        },
    )
    return make_windows(series, 6)


def train_log():
    ds = linear_trend_windows()
    est = SequenceForecaster(architecture="lstm", head="plain", epochs=200, batch_size=64,
                             lr=3e-3, seed=0)
    est.fit(ds.inputs, ds.targets)
    return est.training_log_


if __name__ == "__main__":
    OUT.write_text(train_log().to_csv(), encoding="utf-8")
    print(f"wrote {OUT}")

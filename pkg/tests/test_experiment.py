import importlib.util
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gluq import SequenceForecaster
from gluq.data import GlucoseSeries, WindowedDataset, make_windows
from gluq.distributions import Gaussian
from gluq.exceptions import ConfigError, MissingCellError, SizeError, StateError, TrainingError
from gluq.experiment import (
    Cell,
    ExperimentConfig,
    emit_outputs,
    evaluate,
    load_config,
    parse_cell,
    parse_config,
    per_patient_analysis,
    prepare_data,
    resolve_grid,
    rolling_forecast,
    train,
)
from gluq.experiment.config import with_cells
from gluq.metrics.report import HEADER, UQ_COLUMNS, MetricsReport, from_json, read_csv
from gluq.models import ModelConfig, build_model
from gluq.synthetic import synthetic_series
from gluq.training import fit_model

ROOT = Path(__file__).resolve().parents[1]
T0 = np.datetime64("2024-03-01T00:00", "ns")


def wave_series(n=400, pid="w", seed=0):
    """Glucose swinging between about 50 and 250 mg/dL, so both events occur."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return GlucoseSeries(pid, T0 + t * np.timedelta64(5, "m"), {
        "glucose": 150.0 + 100.0 * np.sin(2 * np.pi * t / 97) + rng.normal(0, 1, n),
        "bolus": rng.uniform(0, 1, n),
        "carbs": rng.uniform(0, 1, n),
        "heart_rate": 70 + rng.normal(0, 3, n),
    })


class FixedDistribution:
    """Probabilistic stand-in returning a Gaussian from a function of the inputs."""

    def __init__(self, fn):
        self.fn = fn

    def predict_distribution(self, X):
        loc, scale = self.fn(X)
        return Gaussian(loc, scale)

    def predict(self, X):
        return self.fn(X)[0]


class ConstantPoint(SequenceForecaster):
    """Plain-head point forecaster that always says ``value``."""

    def __init__(self, value=120.0, horizon=6):
        super().__init__(architecture="lstm", head="plain", horizon=horizon)
        self.value = value

    def predict(self, X):
        return np.full((len(X), self.horizon), self.value)


# -- config -------------------------------------------------------------------

CONFIG_TEXT = """
# comment line
synthetic_patients = 2
synthetic_length = 600   # trailing comment
feature = steps
horizon = 12
models = lstm/evidential, transformer/dropout, ridge
epochs = 3
lr = 1e-3
beta_r = none
output_dir = out
column.glucose = cgm
"""


def test_parse_config_values(tmp_path):
    cfg = parse_config(CONFIG_TEXT, tmp_path).validate()
    assert cfg.feature == "steps" and cfg.horizon == 12 and cfg.epochs == 3
    assert cfg.models == (Cell("lstm", "evidential"), Cell("transformer", "dropout"), Cell("ridge"))
    assert cfg.lr == 1e-3 and cfg.beta_r is None
    assert cfg.output_dir == str(tmp_path / "out")
    assert cfg.columns == {"glucose": "cgm"}
    assert cfg.batch_size == 1024 and cfg.mc_samples == 100 and cfg.kl_coef == 0.01


def test_config_text_round_trip(tmp_path):
    cfg = parse_config(CONFIG_TEXT, tmp_path)
    assert parse_config(cfg.to_text(), tmp_path) == cfg


def test_overrides_win(tmp_path):
    cfg = parse_config(CONFIG_TEXT, tmp_path, overrides={"seed": 9, "epochs": None})
    assert cfg.seed == 9 and cfg.epochs == 3


@pytest.mark.parametrize("line", [
    "colour = blue",
    "horizon = six",
    "models = lstm/bayes",
    "models = cnn/plain",
    "no equals sign here",
    "column.pulse = hr",
])
def test_config_errors(tmp_path, line):
    with pytest.raises(ConfigError):
        parse_config("synthetic_patients = 1\n" + line, tmp_path).validate()


@pytest.mark.parametrize("change", [
    dict(horizon=7), dict(feature="mood"), dict(epochs=-1), dict(batch_size=0), dict(lr=0.0),
    dict(mc_samples=1), dict(dropout=1.0), dict(kl_coef=-0.1), dict(beta_r=0.0),
    dict(detection="vote"), dict(models=()), dict(synthetic_patients=0),
    dict(data=("x.csv",)), dict(grid="no_such.grid"),
])
def test_config_validation(change):
    with pytest.raises(ConfigError):
        replace(ExperimentConfig(synthetic_patients=1), **change).validate()


def test_missing_data_path_is_config_error(tmp_path):
    (tmp_path / "c.txt").write_text("data = nowhere/\n")
    with pytest.raises(ConfigError, match="nowhere"):
        load_config(tmp_path / "c.txt")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.txt")


def test_cell_selection():
    cfg = ExperimentConfig(synthetic_patients=1, models=(parse_cell("ridge"), parse_cell("gru_attn/plain")))
    assert with_cells(cfg, ["gru_attn/plain"]).models == (Cell("gru_attn", "plain"),)
    with pytest.raises(ConfigError):
        with_cells(cfg, ["lstm/plain"])
    assert Cell("gru_attn", "dropout").slug == "gru_attn_dropout"
    assert not Cell("gru_attn", "plain").probabilistic and Cell("ridge").probabilistic


# -- data preparation ---------------------------------------------------------

@pytest.fixture(scope="module")
def prepared():
    series = [synthetic_series(500, f"p{i}", seed=i) for i in range(2)]
    return prepare_data(series, 6)


def test_no_leakage(prepared):
    step = np.timedelta64(5, "m")
    for pid in ("p0", "p1"):
        seen = []
        for ds in (prepared.train, prepared.val):
            m = ds.patient_ids == pid
            seen.append(ds.origins[m].max() + ds.horizon * step)  # last target time
        test_origins = prepared.test.origins[prepared.test.patient_ids == pid]
        assert test_origins.min() > max(seen)


def test_targets_stay_in_mgdl(prepared):
    assert prepared.train.targets.min() > 30 and prepared.train.targets.max() < 500
    assert abs(prepared.train.inputs[..., 0].mean()) < 0.2


# -- training -----------------------------------------------------------------

def small_config(**kw):
    base = dict(synthetic_patients=1, epochs=2, batch_size=64, lr=1e-3, mc_samples=4)
    return ExperimentConfig(**{**base, **kw})


def test_zero_epochs_returns_initial_model(prepared):
    cell = Cell("gru_attn", "evidential")
    est, log = train(small_config(epochs=0), cell, prepared)
    init = build_model(ModelConfig("gru_attn", "evidential", 6, None, 0, 4))
    for a, b in zip(est.model_.parameters(), init.parameters()):
        assert a.data.tobytes() == b.data.tobytes()
    assert log.records == [] and log.best_epoch is None


def test_training_logs_are_deterministic(prepared):
    cell = Cell("lstm", "dropout")
    _, a = train(small_config(), cell, prepared)
    _, b = train(small_config(), cell, prepared)
    assert a.to_csv() == b.to_csv()
    assert [r.epoch for r in a.records] == [0, 1]
    assert all(r.val_loss is not None for r in a.records)


def test_ridge_cell_has_no_log(prepared):
    est, log = train(small_config(), Cell("ridge"), prepared)
    assert log is None and est.predict(prepared.test.inputs[:2]).shape == (2, 6)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    model = build_model(ModelConfig("lstm", "plain", horizon=1))
    X = np.random.default_rng(0).normal(size=(8, 36, 4))
    with pytest.raises(TrainingError) as info:
        fit_model(model, X, np.full((8, 1), 1e300), epochs=3)
    assert info.value.epoch == 0


def _golden_module():
    spec = importlib.util.spec_from_file_location("make_golden_log", ROOT / "scripts" / "make_golden_log.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_linear_trend_learning_curve_matches_golden_log():
    golden = (ROOT / "tests" / "golden" / "linear_trend_lstm.csv").read_text()
    log = _golden_module().train_log()
    assert log.to_csv() == golden
    window_means = np.array([r.train_loss for r in log.records]).reshape(10, 20).mean(axis=1)
    assert np.all(np.diff(window_means) < 0)


# -- evaluation ---------------------------------------------------------------

@pytest.fixture(scope="module")
def wave():
    return make_windows(wave_series(), 6)


def truth_lookup(ds, scale=1e-3):
    index = {x.tobytes(): i for i, x in enumerate(ds.inputs)}

    def fn(X):
        rows = [index[x.tobytes()] for x in X]
        return ds.targets[rows], np.full((len(X), ds.horizon), scale)
    return fn


def test_oracle_model_scores_perfectly(wave):
    ev = evaluate(FixedDistribution(truth_lookup(wave)), wave, resolve_grid("clarke"), cell="oracle")
    r = ev.report
    assert r.zA == 100.0 and r.MARD == 0.0
    assert r.S70 == 1.0 and r.S180 == 1.0
    assert r.A70 == 1.0 and r.A180 == 1.0
    assert r.B70 < 1e-6 and r.B180 < 1e-6


def test_constant_120_misses_every_hypo(wave):
    assert wave.targets.min() < 70
    r = evaluate(ConstantPoint(120.0), wave, resolve_grid("dts")).report
    assert r.S70 == 0.0 and r.S180 == 0.0
    const = FixedDistribution(lambda X: (np.full((len(X), 6), 120.0), np.full((len(X), 6), 5.0)))
    assert evaluate(const, wave, resolve_grid("dts")).report.S70 == 0.0


def test_blank_cell_contract(wave):
    grid = resolve_grid("clarke")
    plain = evaluate(ConstantPoint(150.0), wave, grid).report
    assert all(getattr(plain, c) is None for c in UQ_COLUMNS)
    assert plain.S70 is not None and plain.zA is not None

    rng = np.random.default_rng(3)
    spread = rng.uniform(5, 60, size=wave.targets.shape)
    noisy = wave.targets + spread * rng.standard_normal(wave.targets.shape)
    index = {x.tobytes(): i for i, x in enumerate(wave.inputs)}

    def fn(X):
        rows = [index[x.tobytes()] for x in X]
        return noisy[rows], spread[rows]
    prob = evaluate(FixedDistribution(fn), wave, grid).report
    assert all(v is not None for v in prob.row())
    assert prob.rho > 0.2  # spread tracks error by construction


def test_interval_detection_rule(wave):
    ev = evaluate(FixedDistribution(truth_lookup(wave)), wave, resolve_grid("clarke"), detection="interval")
    assert ev.report.S70 == 1.0 and ev.report.S180 == 1.0


def test_unlabeled_windows_rejected(wave):
    unlabeled = WindowedDataset(wave.inputs, None, 6, wave.origins, wave.end_index, wave.patient_ids)
    with pytest.raises(StateError):
        evaluate(ConstantPoint(), unlabeled, resolve_grid("clarke"))


# -- rolling forecasts --------------------------------------------------------

def last_glucose_plus_step(horizon, sigma=None):
    """Forecast depends on the window, so overlapping windows disagree."""
    def fn(X):
        base = X[:, -1, 0][:, None] + np.arange(1, horizon + 1)[None, :] * X[:, -2, 1][:, None]
        scale = np.full_like(base, 3.0) if sigma is None else sigma(X, base)
        return base, scale
    return fn


def test_rolling_h1_equals_raw_prediction():
    s = wave_series(200)
    fn = last_glucose_plus_step(1)
    fc = rolling_forecast(FixedDistribution(fn), s, 1)
    ds = make_windows(s, 1)
    pred = fn(ds.inputs)[0][:, 0]
    assert fc.n_windows.max() == 1
    np.testing.assert_array_equal(fc.mean[ds.end_index + 1], pred)
    assert np.all(np.isnan(fc.mean[:36]))


def test_rolling_constant_predictor_gives_flat_bands():
    s = wave_series(150)
    const = FixedDistribution(lambda X: (np.full((len(X), 6), 120.0), np.full((len(X), 6), 7.0)))
    fc = rolling_forecast(const, s, 6)
    np.testing.assert_allclose(fc.mean[36:], 120.0, rtol=1e-15)
    np.testing.assert_allclose(fc.lower[36:], 106.0, rtol=1e-15)
    np.testing.assert_allclose(fc.upper[36:], 134.0, rtol=1e-15)
    assert np.all(np.isnan(fc.mean[:36]))
    np.testing.assert_array_equal(fc.timestamps, s.timestamps)
    np.testing.assert_array_equal(fc.measured, s.glucose_mgdl)


def test_rolling_matches_brute_force_overlap():
    s = wave_series(120)
    fn = last_glucose_plus_step(6, sigma=lambda X, base: 1.0 + np.abs(base) * 0.01)
    fc = rolling_forecast(FixedDistribution(fn), s, 6)
    ds = make_windows(s, 6)
    mean, sd = fn(ds.inputs)
    for t in range(len(s)):
        hits = [(w, t - e - 1) for w, e in enumerate(ds.end_index) if 0 <= t - e - 1 < 6]
        assert fc.n_windows[t] == len(hits)
        if not hits:
            assert np.isnan(fc.mean[t])
            continue
        if 41 <= t < len(s) - 5:
            assert len(hits) == 6
        assert fc.mean[t] == pytest.approx(np.mean([mean[w, k] for w, k in hits]), rel=1e-12)
        assert fc.lower[t] == pytest.approx(np.mean([mean[w, k] - 2 * sd[w, k] for w, k in hits]), rel=1e-12)
        assert fc.upper[t] == pytest.approx(np.mean([mean[w, k] + 2 * sd[w, k] for w, k in hits]), rel=1e-12)
        assert fc.lower[t] <= fc.mean[t] <= fc.upper[t]


def test_rolling_with_trained_model_keeps_band_order(prepared):
    est, _ = train(small_config(epochs=1), Cell("lstm", "evidential"), prepared)
    fc = rolling_forecast(est, prepared.test_series[0], 6)
    ok = ~np.isnan(fc.mean)
    assert ok.sum() == len(fc.mean) - 36
    assert np.all(fc.lower[ok] <= fc.mean[ok]) and np.all(fc.mean[ok] <= fc.upper[ok])


def test_rolling_too_short():
    with pytest.raises(SizeError):
        rolling_forecast(ConstantPoint(), wave_series(41), 6)


# -- outputs ------------------------------------------------------------------

def report(cell="transformer/evidential", **kw):
    vals = dict(zA=96.8, MARD=4.14, S70=0.81, B70=0.02, A70=0.7, S180=0.9, B180=0.05, A180=0.85,
                MCE=0.03, rho=0.68, rho_z=0.4)
    return MetricsReport(cell=cell, **{**vals, **kw})


def test_empty_report_list_gives_header_only(tmp_path):
    emit_outputs(tmp_path, [])
    assert (tmp_path / "report.csv").read_text() == ",".join(HEADER) + "\n"


def test_one_report_row_follows_schema(tmp_path):
    emit_outputs(tmp_path, [report()])
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0].split(",") == ["cell", "zA", "MARD", "S70", "B70", "A70", "S180", "B180", "A180",
                                   "MCE", "rho", "rho_z"]
    assert len(lines) == 2 and lines[1].startswith("transformer/evidential,96.8,4.14,")


def test_reports_round_trip(tmp_path):
    reports = [report(), report("gru_attn/plain", **{c: None for c in UQ_COLUMNS}), report("ridge", MCE=1e-17)]
    emit_outputs(tmp_path, reports)
    assert read_csv(tmp_path / "report.csv") == reports
    assert from_json((tmp_path / "report.json").read_text()) == reports
    plain_row = (tmp_path / "report.csv").read_text().splitlines()[2].split(",")
    assert [v == "" for v in plain_row[1:]] == [h in UQ_COLUMNS for h in HEADER[1:]]


def test_emit_all_artifacts(tmp_path, wave):
    ev = evaluate(FixedDistribution(truth_lookup(wave, scale=4.0)), wave, resolve_grid("clarke"), cell="m")
    fc = rolling_forecast(FixedDistribution(last_glucose_plus_step(6)), wave_series(120, pid="w1"), 6)
    written = emit_outputs(tmp_path, [ev.report], {"a/b": ev}, {"a/b": [fc]},
                           {"MARD": {"x": {"p1": 1.0, "p2": 2.0}, "y": {"p1": 3.0}}}, wave.targets)
    names = sorted(p.name for p in written)
    assert names == sorted(["report.csv", "report.json", "report.md", "pr_curves.csv", "coverage.csv",
                            "grid_a_b.csv", "rolling_a_b_w1.csv", "per_patient_MARD.csv"])
    grid_rows = (tmp_path / "grid_a_b.csv").read_text().splitlines()
    assert grid_rows[0] == "window,step,reference,predicted,zone" and len(grid_rows) == 1 + wave.targets.size
    pp = (tmp_path / "per_patient_MARD.csv").read_text().splitlines()
    assert pp == ["patient,x,y", "p1,1.0,3.0", "p2,2.0,"]
    rolling = (tmp_path / "rolling_a_b_w1.csv").read_text().splitlines()
    assert rolling[1].split(",")[2:] == ["", "", "", "0", ""]


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_outputs(blocker / "sub", [report()])


# -- per-patient analysis -----------------------------------------------------

def test_identical_feature_sets():
    col = {f"p{i}": float(v) for i, v in enumerate([3.1, 4.2, 5.0, 2.2, 6.3, 4.4, 5.5, 3.3])}
    res = per_patient_analysis({k: dict(col) for k in ("heart_rate", "steps", "calories", "basal")})
    assert res.friedman.statistic == 0.0
    assert all(row.adjusted == 1.0 for row in res.pairwise) and len(res.pairwise) == 6


def test_dominant_feature_set_has_mean_rank_one():
    rng = np.random.default_rng(0)
    scores = {c: {f"p{i}": float(v) for i, v in enumerate(rng.uniform(5, 10, 12))}
              for c in ("steps", "calories", "basal")}
    scores["heart_rate"] = {f"p{i}": 1.0 + 0.1 * i for i in range(12)}
    res = per_patient_analysis(scores, metric="MARD")
    assert res.friedman.mean_ranks[res.conditions.index("heart_rate")] == 1.0
    zone = per_patient_analysis({c: {p: -v for p, v in col.items()} for c, col in scores.items()},
                                metric="zA", lower_is_better=False)
    # negated scores with higher-is-better keep the same winner
    assert zone.friedman.mean_ranks[zone.conditions.index("heart_rate")] == 1.0


def test_missing_cell_is_named():
    scores = {"steps": {"p1": 1.0, "p2": 2.0}, "basal": {"p1": 1.5}}
    with pytest.raises(MissingCellError, match="basal.*p2"):
        per_patient_analysis(scores)
    with pytest.raises(MissingCellError):
        per_patient_analysis({"steps": {"p1": 1.0}, "basal": {"p1": float("nan")}})

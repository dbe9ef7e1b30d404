import csv
import subprocess
import sys

import pytest

from gluq import cli
from gluq.exceptions import TrainingError
from gluq.metrics.report import HEADER, read_csv
from gluq.synthetic import synthetic_series, write_cgm_csv


def write_config(path, **entries):
    base = dict(synthetic_patients=2, synthetic_length=500, epochs=1, batch_size=64, lr=1e-3,
                mc_samples=4, models="lstm/evidential, lstm/plain, ridge", output_dir="out")
    base.update(entries)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items() if v is not None))
    return path


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """Train, evaluate and forecast once; tests inspect the output tree."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "exp.txt")
    codes = [cli.main(["train", "-c", str(cfg)]),
             cli.main(["evaluate", "-c", str(cfg)]),
             cli.main(["forecast", "-c", str(cfg), "--cells", "lstm/evidential"])]
    return root, cfg, codes


def test_pipeline_succeeds(run):
    _, _, codes = run
    assert codes == [0, 0, 0]


def test_train_outputs(run):
    out = run[0] / "out"
    assert sorted(p.name for p in (out / "models").iterdir()) == [
        "lstm_evidential.gluq", "lstm_plain.gluq", "ridge.gluq"]
    assert sorted(p.name for p in (out / "logs").iterdir()) == ["lstm_evidential.csv", "lstm_plain.csv"]
    assert (out / "logs" / "lstm_plain.csv").read_text().splitlines()[0] == "epoch,train_loss,val_loss"
    assert "synthetic_patients = 2" in (out / "config.txt").read_text()


def test_evaluate_outputs(run):
    out = run[0] / "out"
    reports = read_csv(out / "report.csv")
    assert [r.cell for r in reports] == ["lstm/evidential", "lstm/plain", "ridge"]
    assert reports[1].MCE is None and reports[0].MCE is not None and reports[2].MCE is not None
    for name in ("report.json", "report.md", "pr_curves.csv", "coverage.csv", "grid_lstm_plain.csv",
                 "per_patient_MARD.csv", "per_patient_zA.csv"):
        assert (out / name).is_file(), name
    with open(out / "per_patient_MARD.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["patient", "lstm/evidential", "lstm/plain", "ridge"]
    assert [r[0] for r in rows[1:]] == ["synthetic-00", "synthetic-01"]


def test_forecast_outputs(run):
    fc = run[0] / "out" / "forecasts"
    names = sorted(p.name for p in fc.glob("rolling_*.csv"))
    assert names == ["rolling_lstm_evidential_synthetic-00.csv", "rolling_lstm_evidential_synthetic-01.csv"]
    lines = (fc / names[0]).read_text().splitlines()
    assert lines[0] == "timestamp,measured,mean,lower,upper,n_windows,covered"
    assert len(lines) == 1 + 100  # 20% test segment of 500 samples


def test_evaluate_is_byte_identical_on_rerun(run, tmp_path):
    root, cfg, _ = run
    out = root / "out"
    before = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert cli.main(["evaluate", "-c", str(cfg)]) == 0
    assert {p.name: p.read_bytes() for p in out.glob("*.csv")} == before


def test_report_combines(run, tmp_path, capsys):
    out = run[0] / "out"
    target = tmp_path / "all.csv"
    assert cli.main(["report", str(out), str(out / "report.csv"), "--format", "csv", "--output", str(target)]) == 0
    assert len(read_csv(target)) == 6
    assert cli.main(["report", str(out)]) == 0
    assert capsys.readouterr().out.startswith("| " + " | ".join(HEADER))


@pytest.fixture(scope="module")
def feature_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("features")
    dirs = []
    for feature in ("heart_rate", "steps", "calories", "basal"):
        cfg = write_config(root / f"{feature}.txt", feature=feature, models="ridge",
                           synthetic_patients=6, output_dir=feature)
        assert cli.main(["train", "-c", str(cfg)]) == 0
        assert cli.main(["evaluate", "-c", str(cfg)]) == 0
        dirs.append(root / feature)
    return root, dirs


def test_analyze(feature_runs, capsys):
    root, dirs = feature_runs
    capsys.readouterr()
    code = cli.main(["analyze", *map(str, dirs), "--cell", "ridge", "--output", str(root / "stats")])
    assert code == 0
    text = capsys.readouterr().out
    assert text.startswith("Friedman chi2(3) = ")
    assert text.count("Holm p = ") == 6
    summary = (root / "stats" / "friedman_MARD.csv").read_text().splitlines()
    assert summary[0] == "section,name,value" and len(summary) == 1 + 3 + 4
    assert len((root / "stats" / "pairwise_MARD.csv").read_text().splitlines()) == 7


def test_analyze_labels_and_errors(feature_runs):
    _, dirs = feature_runs
    assert cli.main(["analyze", f"a={dirs[0]}", f"b={dirs[1]}", "--cell", "ridge", "--metric", "zA"]) == 0
    assert cli.main(["analyze", f"a={dirs[0]}", f"a={dirs[1]}", "--cell", "ridge"]) == cli.EXIT_CONFIG
    assert cli.main(["analyze", str(dirs[0]), str(dirs[1]), "--cell", "gru_attn/plain"]) == cli.EXIT_DATA


def test_csv_data_directory(tmp_path):
    data = tmp_path / "patients"
    data.mkdir()
    for i in range(2):
        write_cgm_csv(synthetic_series(300, f"p{i}", seed=i), data / f"p{i}.csv")
    cfg = write_config(tmp_path / "c.txt", synthetic_patients=None, data="patients", models="ridge")
    assert cli.main(["train", "-c", str(cfg)]) == 0
    assert cli.main(["evaluate", "-c", str(cfg), "-o", str(tmp_path / "elsewhere"), "--seed", "3"]) == cli.EXIT_DATA
    assert cli.main(["evaluate", "-c", str(cfg)]) == 0
    assert read_csv(tmp_path / "out" / "report.csv")[0].cell == "ridge"


# -- exit codes ---------------------------------------------------------------

def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["train"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == 2


def test_config_error_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.txt", horizon=7)
    assert cli.main(["train", "-c", str(cfg)]) == cli.EXIT_CONFIG == 3
    assert cli.main(["train", "-c", str(tmp_path / "missing.txt")]) == 3
    cfg = write_config(tmp_path / "d.txt")
    assert cli.main(["train", "-c", str(cfg), "--cells", "transformer/plain"]) == 3


def test_data_error_exit_code(tmp_path):
    data = tmp_path / "patients"
    data.mkdir()
    (data / "bad.csv").write_text("time,glucose\n2024-01-01 00:00,100\n")
    cfg = write_config(tmp_path / "c.txt", synthetic_patients=None, data="patients")
    assert cli.main(["train", "-c", str(cfg)]) == cli.EXIT_DATA == 4


def test_untrained_model_is_data_error(tmp_path):
    cfg = write_config(tmp_path / "c.txt")
    assert cli.main(["evaluate", "-c", str(cfg)]) == cli.EXIT_DATA


def test_training_error_exit_code(tmp_path, monkeypatch):
    def diverge(*args, **kwargs):
        raise TrainingError("non-finite training loss at epoch 0", epoch=0)
    monkeypatch.setattr(cli, "train", diverge)
    cfg = write_config(tmp_path / "c.txt")
    assert cli.main(["train", "-c", str(cfg)]) == cli.EXIT_TRAINING == 5


def test_io_error_exit_code(tmp_path):
    (tmp_path / "out").write_text("a file where the output directory should be")
    cfg = write_config(tmp_path / "c.txt")
    assert cli.main(["train", "-c", str(cfg)]) == cli.EXIT_IO == 6


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gluq.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "evaluate", "report", "forecast", "analyze"):
        assert name in proc.stdout

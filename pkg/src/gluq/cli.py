"""Command-line entry point: ``gluq {train,evaluate,report,forecast,analyze}``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data, 5 training,
6 file I/O, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import CheckpointError, NumericError
from .estimators import BayesianRidgeForecaster, SequenceForecaster
from .exceptions import (
    ConfigError,
    DataFormatError,
    DegenerateChannelError,
    DomainError,
    GridSpecError,
    MissingCellError,
    SchemaError,
    ShapeError,
    SizeError,
    StateError,
    TrainingError,
    UndefinedMetricError,
)
from .experiment import analysis, outputs
from .experiment.config import RIDGE, load_config, parse_config, with_cells
from .experiment.pipeline import evaluate, load_series, prepare_data, resolve_grid, rolling_forecast, train
from .metrics import mard, zone_a_fraction
from .metrics.report import markdown_table, read_csv, write_csv

log = logging.getLogger("gluq")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING, EXIT_IO = 0, 3, 4, 5, 6
_EXIT = [
    (ConfigError, EXIT_CONFIG),
    (TrainingError, EXIT_TRAINING),
    (NumericError, EXIT_TRAINING),
    ((SchemaError, DataFormatError, SizeError, DegenerateChannelError, GridSpecError, MissingCellError,
      StateError, ShapeError, DomainError, UndefinedMetricError), EXIT_DATA),
    ((OSError, CheckpointError), EXIT_IO),
]

CONFIG_NAME = "config.txt"


def _config(args):
    overrides = {"seed": args.seed, "output_dir": args.output_dir, "epochs": getattr(args, "epochs", None)}
    cfg = load_config(args.config, overrides={k: v for k, v in overrides.items() if v is not None})
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=str(Path(args.output_dir)))
    if getattr(args, "cells", None):
        cfg = with_cells(cfg, args.cells)
    return cfg


def _model_path(out, cell):
    return Path(out) / "models" / f"{cell.slug}.gluq"


def _load_model(path, cell):
    if not path.is_file():
        raise StateError(f"no trained model for {cell.name} at {path}; run 'gluq train' first")
    cls = BayesianRidgeForecaster if cell.architecture == RIDGE else SequenceForecaster
    return cls.load(path)


def cmd_train(args):
    cfg = _config(args)
    out = Path(cfg.output_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    (out / CONFIG_NAME).write_text(cfg.to_text(), encoding="utf-8")
    data = prepare_data(load_series(cfg), cfg.horizon)
    log.info("windows: train %d, val %d, test %d", len(data.train), len(data.val), len(data.test))
    for cell in cfg.models:
        def progress(rec, name=cell.name):
            log.info("%s epoch %d train %.5f val %s", name, rec.epoch, rec.train_loss, rec.val_loss)
        est, tlog = train(cfg, cell, data, callback=progress)
        est.save(_model_path(out, cell))
        if tlog is not None:
            outputs.write_training_log(out / "logs" / f"{cell.slug}.csv", tlog)
        log.info("saved %s", _model_path(out, cell))
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _config(args)
    out = Path(cfg.output_dir)
    grid = resolve_grid(cfg.grid)
    data = prepare_data(load_series(cfg), cfg.horizon)
    reports, evals, per_patient = [], {}, {"zA": {}, "MARD": {}}
    pids = data.test.patient_ids
    for cell in cfg.models:
        est = _load_model(_model_path(out, cell), cell)
        ev = evaluate(est, data.test, grid, cell.name, cfg.detection)
        reports.append(ev.report)
        evals[cell.name] = ev
        for pid in sorted(set(pids)):
            rows = pids == pid
            per_patient["zA"].setdefault(cell.name, {})[pid] = zone_a_fraction(ev.zones[rows])
            per_patient["MARD"].setdefault(cell.name, {})[pid] = mard(ev.mean[rows], data.test.targets[rows])
    outputs.emit_outputs(out, reports, evals, per_patient=per_patient, test_targets=data.test.targets)
    sys.stdout.write(markdown_table(reports))
    return EXIT_OK


def cmd_forecast(args):
    cfg = _config(args)
    out = Path(cfg.output_dir)
    data = prepare_data(load_series(cfg), cfg.horizon)
    forecasts = {}
    for cell in cfg.models:
        est = _load_model(_model_path(out, cell), cell)
        series = [s for s in data.test_series if not args.patient or s.patient_id in args.patient]
        if not series:
            raise ConfigError(f"no test series for patients {args.patient}")
        forecasts[cell.name] = [rolling_forecast(est, s, cfg.horizon) for s in series]
    written = outputs.emit_outputs(out / "forecasts", [], forecasts=forecasts)
    for p in written:
        if p.name.startswith("rolling_"):
            print(p)
    return EXIT_OK


def cmd_report(args):
    reports = []
    for src in args.inputs:
        p = Path(src)
        p = p / "report.csv" if p.is_dir() else p
        try:
            reports.extend(read_csv(p))
        except ValueError as exc:
            raise DataFormatError(f"{p}: {exc}") from None
    text = markdown_table(reports) if args.format == "markdown" else write_csv(reports)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _read_matrix(path, cell):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "patient":
        raise DataFormatError(f"{path}: not a per-patient matrix")
    if cell not in rows[0]:
        raise MissingCellError(f"{path} has no column for cell {cell!r}")
    j = rows[0].index(cell)
    return {r[0]: (float(r[j]) if r[j] else None) for r in rows[1:]}


def cmd_analyze(args):
    scores = {}
    for item in args.inputs:
        label, sep, directory = item.partition("=")
        if not sep:
            directory = label
            cfg_file = Path(directory) / CONFIG_NAME
            label = parse_config(cfg_file.read_text(encoding="utf-8")).feature if cfg_file.is_file() else directory
        if label in scores:
            raise ConfigError(f"duplicate condition label {label!r}; name inputs as label=DIR")
        scores[label] = _read_matrix(Path(directory) / f"per_patient_{args.metric}.csv", args.cell)
    result = analysis.per_patient_analysis(scores, args.metric, lower_is_better=args.metric != "zA")
    f = result.friedman
    print(f"Friedman chi2({len(result.conditions) - 1}) = {f.statistic:.4f}, p = {f.pvalue:.4g}, "
          f"W = {f.kendall_w:.4f}")
    for c, r in zip(result.conditions, f.mean_ranks):
        print(f"  mean rank {c}: {r:.3f}")
    for row in result.pairwise:
        extra = f" ({row.note})" if row.note else ""
        print(f"  {row.first} vs {row.second}: p = {row.pvalue:.4g}, Holm p = {row.adjusted:.4g}{extra}")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        outputs.write_rows(out / f"friedman_{args.metric}.csv", ("section", "name", "value"),
                           result.summary_rows())
        outputs.write_rows(out / f"pairwise_{args.metric}.csv",
                           ("first", "second", "statistic", "p", "holm_p", "note"),
                           ((r.first, r.second, r.statistic, r.pvalue, r.adjusted, r.note)
                            for r in result.pairwise))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gluq", description="Glucose forecasting with uncertainty.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="key = value experiment config")
        p.add_argument("-o", "--output-dir", help="override output_dir")
        p.add_argument("--seed", type=int, help="override seed")
        p.add_argument("--cells", nargs="+", metavar="CELL", help="subset of model cells, e.g. transformer/evidential")
        p.set_defaults(func=fn)
        return p

    p = experiment("train", cmd_train, "train every selected model cell")
    p.add_argument("--epochs", type=int, help="override epochs")
    experiment("evaluate", cmd_evaluate, "score trained models on the test split and write outputs")
    p = experiment("forecast", cmd_forecast, "rolling forecasts over each patient's test segment")
    p.add_argument("--patient", nargs="+", help="restrict to these patient ids")

    p = sub.add_parser("report", help="combine report.csv files into one table")
    p.add_argument("inputs", nargs="+", help="report.csv files or output directories")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--output", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("analyze", help="Friedman and Holm-adjusted Wilcoxon tests across feature sets")
    p.add_argument("inputs", nargs="+", metavar="[LABEL=]DIR", help="evaluate output directories")
    p.add_argument("--cell", default="transformer/evidential")
    p.add_argument("--metric", choices=("MARD", "zA"), default="MARD")
    p.add_argument("--output", help="directory for the summary CSV files")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except Exception as exc:  # map to documented exit codes
        for kinds, code in _EXIT:
            if isinstance(exc, kinds):
                print(f"gluq: error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())

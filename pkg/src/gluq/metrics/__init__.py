from .accuracy import mard, zone_a_fraction
from .errorgrid import ZONES, ErrorGridSpec, builtin_grid, grid_classify, load_grid, zone_codes
from .probabilistic import (
    DEFAULT_LEVELS,
    CalibrationCurve,
    brier,
    coverage_curve,
    interval_flags,
    pr_auc,
    pr_curve,
    sensitivity,
    sensitivity_and_pr_auc,
    spearman,
)
from .report import METRIC_COLUMNS, UQ_COLUMNS, MetricsReport, markdown_table, read_csv, write_csv
from .stats import FriedmanResult, WilcoxonResult, friedman_test, holm_adjust, wilcoxon_holm, wilcoxon_signed_rank

__all__ = [
    "mard", "zone_a_fraction",
    "ZONES", "ErrorGridSpec", "builtin_grid", "grid_classify", "load_grid", "zone_codes",
    "DEFAULT_LEVELS", "CalibrationCurve", "brier", "coverage_curve", "interval_flags",
    "pr_auc", "pr_curve", "sensitivity", "sensitivity_and_pr_auc", "spearman",
    "METRIC_COLUMNS", "UQ_COLUMNS", "MetricsReport", "markdown_table", "read_csv", "write_csv",
    "FriedmanResult", "WilcoxonResult", "friedman_test", "holm_adjust", "wilcoxon_holm",
    "wilcoxon_signed_rank",
]

"""Table-style evaluation report with CSV / JSON / markdown serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

__all__ = ["MetricsReport", "METRIC_COLUMNS", "UQ_COLUMNS", "write_csv", "read_csv",
           "to_json", "from_json", "markdown_table"]

METRIC_COLUMNS = ("zA", "MARD", "S70", "B70", "A70", "S180", "B180", "A180", "MCE", "rho", "rho_z")
# columns left blank for point-forecast models
UQ_COLUMNS = ("B70", "A70", "B180", "A180", "MCE", "rho", "rho_z")
_PERCENT = ("zA", "MARD")
_UNIT = ("S70", "B70", "A70", "S180", "B180", "A180", "MCE")
_CORR = ("rho", "rho_z")


@dataclass(frozen=True)
class MetricsReport:
    """One evaluated cell. ``None`` marks a metric that does not apply.

    ``MARD`` is a percentage and may exceed 100 for very poor forecasts;
    the other bounds are checked on construction.
    """

    cell: str
    zA: float
    MARD: float
    S70: float | None = None
    B70: float | None = None
    A70: float | None = None
    S180: float | None = None
    B180: float | None = None
    A180: float | None = None
    MCE: float | None = None
    rho: float | None = None
    rho_z: float | None = None

    def __post_init__(self):
        for name in METRIC_COLUMNS:
            v = getattr(self, name)
            if v is None:
                continue
            v = float(v)
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            if name == "zA" and not 0 <= v <= 100:
                raise ValueError(f"zA must lie in [0, 100], got {v}")
            if name == "MARD" and v < 0:
                raise ValueError(f"MARD must be non-negative, got {v}")
            if name in _UNIT and not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            if name in _CORR and not -1 <= v <= 1:
                raise ValueError(f"{name} must lie in [-1, 1], got {v}")

    @property
    def probabilistic(self) -> bool:
        return any(getattr(self, c) is not None for c in UQ_COLUMNS)

    def row(self):
        return [self.cell] + [getattr(self, c) for c in METRIC_COLUMNS]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**d)


HEADER = ("cell",) + METRIC_COLUMNS


def _cell(v):
    return "" if v is None else repr(float(v))


def write_csv(reports, path=None) -> str:
    """CSV with a fixed header; blank cells for inapplicable metrics."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in reports:
        w.writerow([r.cell] + [_cell(getattr(r, c)) for c in METRIC_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv(source):
    """Parse CSV text (or a path) written by :func:`write_csv`."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else str(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise ValueError(f"unexpected report header: {rows[0] if rows else None}")
    out = []
    for row in rows[1:]:
        if len(row) != len(HEADER):
            raise ValueError(f"report row has {len(row)} fields, expected {len(HEADER)}")
        vals = {c: (None if s == "" else float(s)) for c, s in zip(METRIC_COLUMNS, row[1:])}
        out.append(MetricsReport(cell=row[0], **vals))
    return out


def to_json(reports) -> str:
    return json.dumps({"columns": list(HEADER), "reports": [r.to_dict() for r in reports]},
                      indent=2, sort_keys=False) + "\n"


def from_json(text):
    doc = json.loads(text)
    if tuple(doc.get("columns", ())) != HEADER:
        raise ValueError("unexpected report columns")
    return [MetricsReport.from_dict(d) for d in doc["reports"]]


def _fmt(name, v):
    if v is None:
        return ""
    if name in _PERCENT:
        return f"{v:.2f}"
    return f"{v:.3f}"


def markdown_table(reports) -> str:
    lines = ["| " + " | ".join(HEADER) + " |", "|" + "---|" * len(HEADER)]
    for r in reports:
        lines.append("| " + " | ".join([r.cell] + [_fmt(c, getattr(r, c)) for c in METRIC_COLUMNS]) + " |")
    return "\n".join(lines) + "\n"

"""Experiment configuration read from a plain ``key = value`` file.

Example::

    # heart-rate inputs, 30-minute horizon
    data = patients/              # CSV files or directories of CSV files
    feature = heart_rate
    horizon = 6
    models = transformer/evidential, transformer/dropout, ridge
    epochs = 300
    batch_size = 1024
    lr = 1e-4
    seed = 0
    output_dir = results/hr30
    column.glucose = cgm_mgdl     # optional CSV header overrides

Lists are comma separated. Relative paths resolve against the config
file's directory.
"""

from __future__ import annotations

import glob
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..data import DEFAULT_COLUMN_MAP, FEATURE_CHOICES
from ..exceptions import ConfigError
from ..models import ARCHITECTURES, HEADS

__all__ = ["ExperimentConfig", "Cell", "parse_cell", "load_config", "parse_config"]

RIDGE = "ridge"
DETECTION_RULES = ("probability", "interval")


@dataclass(frozen=True)
class Cell:
    """One model/head combination; ``architecture == "ridge"`` is the linear baseline."""

    architecture: str
    head: str | None = None

    @property
    def name(self) -> str:
        return self.architecture if self.head is None else f"{self.architecture}/{self.head}"

    @property
    def slug(self) -> str:
        return self.name.replace("/", "_")

    @property
    def probabilistic(self) -> bool:
        return self.head in ("dropout", "evidential") or self.architecture == RIDGE


def parse_cell(text) -> Cell:
    text = text.strip()
    if text == RIDGE:
        return Cell(RIDGE)
    arch, sep, head = text.partition("/")
    if not sep or arch not in ARCHITECTURES or head not in HEADS:
        raise ConfigError(
            f"bad model cell {text!r}: use 'ridge' or '<architecture>/<head>' with architecture in "
            f"{ARCHITECTURES} and head in {HEADS}")
    return Cell(arch, head)


@dataclass(frozen=True)
class ExperimentConfig:
    data: tuple = ()
    feature: str = "heart_rate"
    horizon: int = 6
    models: tuple = (Cell("transformer", "evidential"),)
    epochs: int = 300
    batch_size: int = 1024
    lr: float = 1e-4
    seed: int = 0
    mc_samples: int = 100
    dropout: float = 0.2
    kl_coef: float = 0.01
    beta_r: float | None = None
    grid: str = "dts"
    detection: str = "probability"
    output_dir: str = "results"
    synthetic_patients: int = 0
    synthetic_length: int = 4000
    columns: dict = field(default_factory=dict)

    def validate(self, check_paths=True) -> "ExperimentConfig":
        if self.feature not in FEATURE_CHOICES:
            raise ConfigError(f"feature must be one of {FEATURE_CHOICES}, got {self.feature!r}")
        if self.horizon not in (6, 12):
            raise ConfigError(f"horizon must be 6 or 12 steps, got {self.horizon}")
        if not self.models:
            raise ConfigError("no model cells selected")
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("epochs must be >= 0, batch_size >= 1 and lr > 0")
        if self.mc_samples < 2:
            raise ConfigError("mc_samples must be at least 2")
        if not 0.0 < self.dropout < 1.0:
            raise ConfigError("dropout must lie in (0, 1)")
        if self.kl_coef < 0:
            raise ConfigError("kl_coef must be non-negative")
        if self.beta_r is not None and not self.beta_r > 0:
            raise ConfigError("beta_r must be positive")
        if self.detection not in DETECTION_RULES:
            raise ConfigError(f"detection must be one of {DETECTION_RULES}")
        unknown = set(self.columns) - set(DEFAULT_COLUMN_MAP)
        if unknown:
            raise ConfigError(f"unknown column roles: {sorted(unknown)}")
        if not self.data and self.synthetic_patients <= 0:
            raise ConfigError("set 'data' or 'synthetic_patients'")
        if self.data and self.synthetic_patients > 0:
            raise ConfigError("'data' and 'synthetic_patients' are mutually exclusive")
        if check_paths:
            self.data_files()
            if self.grid not in ("dts", "clarke") and not Path(self.grid).is_file():
                raise ConfigError(f"grid file not found: {self.grid}")
        return self

    def data_files(self) -> list:
        """Expand ``data`` entries (files, directories, globs) into sorted CSV paths."""
        files = []
        for entry in self.data:
            p = Path(entry)
            if p.is_dir():
                found = sorted(p.glob("*.csv"))
            elif p.is_file():
                found = [p]
            else:
                found = [Path(m) for m in sorted(glob.glob(entry))]
            if not found:
                raise ConfigError(f"data path matches no CSV files: {entry}")
            files.extend(found)
        return files

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "columns":
                lines += [f"column.{k} = {c}" for k, c in sorted(v.items())]
            elif f.name == "models":
                lines.append(f"models = {', '.join(c.name for c in v)}")
            elif f.name == "data":
                lines.append(f"data = {', '.join(map(str, v))}")
            elif v is None:
                continue
            else:
                lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_INT = {"horizon", "epochs", "batch_size", "seed", "mc_samples", "synthetic_patients", "synthetic_length"}
_FLOAT = {"lr", "dropout", "kl_coef", "beta_r"}
_STR = {"feature", "grid", "detection", "output_dir"}


def parse_config(text, base_dir=".", overrides=None) -> ExperimentConfig:
    """Parse config text; ``overrides`` (a dict of raw strings) win over file values."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        raw[key.strip()] = value.strip()
    raw.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    base = Path(base_dir)
    kw, columns = {}, {}
    for key, value in raw.items():
        try:
            if key.startswith("column."):
                columns[key[len("column."):]] = value
            elif key in _INT:
                kw[key] = int(value)
            elif key in _FLOAT:
                kw[key] = None if value.lower() in ("", "none") else float(value)
            elif key in _STR:
                kw[key] = value
            elif key == "models":
                kw[key] = tuple(parse_cell(v) for v in value.split(",") if v.strip())
            elif key == "data":
                kw[key] = tuple(str(base / v.strip()) for v in value.split(",") if v.strip())
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    if "output_dir" in kw and not Path(kw["output_dir"]).is_absolute():
        kw["output_dir"] = str(base / kw["output_dir"])
    if "grid" in kw and kw["grid"] not in ("dts", "clarke") and not Path(kw["grid"]).is_absolute():
        kw["grid"] = str(base / kw["grid"])
    return ExperimentConfig(columns=columns, **kw)


def load_config(path, overrides=None, check_paths=True) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, overrides).validate(check_paths)


def with_cells(config: ExperimentConfig, names) -> ExperimentConfig:
    """Restrict the model matrix to the named cells."""
    wanted = [parse_cell(n) for n in names]
    missing = [c.name for c in wanted if c not in config.models]
    if missing:
        raise ConfigError(f"cells not in config: {missing}")
    return replace(config, models=tuple(wanted))

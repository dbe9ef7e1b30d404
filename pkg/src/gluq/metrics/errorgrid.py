"""Clinical error grids as polygon partitions of the (reference, predicted) plane.

Grid files are plain text::

    name: clarke
    version: 1
    domain: 0 600 0 600
    # one closed region boundary per line: <zone>: x,y x,y ...
    A: 0,0 70,0 70,56 ...

Coordinates are mg/dL and may be written as fractions (``175/3``). A zone
may own several regions. Loading checks that the regions tile the domain
and that the diagonal lies in zone A.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from ..exceptions import GridSpecError

__all__ = ["ZONES", "ErrorGridSpec", "load_grid", "builtin_grid", "grid_classify", "zone_codes"]

ZONES = ("A", "B", "C", "D", "E")
_BUILTIN = {"clarke": "clarke.grid", "dts": "dts_approx.grid"}


@dataclass(frozen=True)
class ErrorGridSpec:
    name: str
    version: str
    domain: tuple
    regions: tuple  # ((zone, vertices (k, 2) array), ...)
    notes: str = ""

    def polygons(self, zone):
        return [v for z, v in self.regions if z == zone]


def _num(token):
    return float(Fraction(token))


def _parse(text, source):
    header, regions = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise GridSpecError(f"{source}:{lineno}: expected 'key: value'")
        key = key.strip()
        if key in ZONES:
            try:
                pts = [tuple(_num(c) for c in pair.split(",")) for pair in rest.split()]
            except (ValueError, ZeroDivisionError) as exc:
                raise GridSpecError(f"{source}:{lineno}: bad vertex list ({exc})") from None
            if len(pts) < 3 or any(len(p) != 2 for p in pts):
                raise GridSpecError(f"{source}:{lineno}: a region needs at least 3 x,y vertices")
            regions.append((key, np.array(pts, dtype=np.float64)))
        else:
            header[key.lower()] = rest.strip()
    if "domain" not in header:
        raise GridSpecError(f"{source}: missing 'domain' header")
    domain = tuple(_num(t) for t in header["domain"].split())
    if len(domain) != 4 or domain[0] >= domain[1] or domain[2] >= domain[3]:
        raise GridSpecError(f"{source}: domain must be 'xmin xmax ymin ymax'")
    return ErrorGridSpec(
        name=header.get("name", Path(str(source)).stem),
        version=header.get("version", "0"),
        domain=domain,
        regions=tuple(regions),
        notes=header.get("notes", ""),
    )


def _area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _inside(px, py, v):
    """Strict crossing-number test (boundary points may land either way)."""
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(px.shape, dtype=bool)
    for a, b, c, d in zip(x0, y0, x1, y1):
        if b == d:
            continue
        straddle = (b > py) != (d > py)
        xc = a + (py - b) * (c - a) / (d - b)
        inside ^= straddle & (px < xc)
    return inside


def _on_boundary(px, py, v, tol):
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    on = np.zeros(px.shape, dtype=bool)
    for a, b, c, d in zip(x0, y0, x1, y1):
        dx, dy = c - a, d - b
        t = np.clip(((px - a) * dx + (py - b) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        on |= np.hypot(px - (a + t * dx), py - (b + t * dy)) <= tol
    return on


def _validate(spec: ErrorGridSpec, source):
    xmin, xmax, ymin, ymax = spec.domain
    if not spec.regions:
        raise GridSpecError(f"{source}: no regions")
    zones_present = {z for z, _ in spec.regions}
    if "A" not in zones_present:
        raise GridSpecError(f"{source}: zone A is missing")
    for zone, v in spec.regions:
        if np.any(v[:, 0] < xmin) or np.any(v[:, 0] > xmax) or np.any(v[:, 1] < ymin) or np.any(v[:, 1] > ymax):
            raise GridSpecError(f"{source}: a zone {zone} region leaves the domain")
        if abs(_area(v)) == 0.0:
            raise GridSpecError(f"{source}: a zone {zone} region has zero area")
    total = sum(abs(_area(v)) for _, v in spec.regions)
    domain_area = (xmax - xmin) * (ymax - ymin)
    if abs(total - domain_area) > 1e-9 * domain_area:
        raise GridSpecError(f"{source}: regions cover area {total:.6g}, domain has {domain_area:.6g}")
    # Probe points off any rational grid so none sits on a boundary.
    gx = xmin + (np.arange(257) + 0.5 + 1e-3 * np.sqrt(2)) * (xmax - xmin) / 257
    gy = ymin + (np.arange(257) + 0.5 + 1e-3 * np.sqrt(3)) * (ymax - ymin) / 257
    px, py = (a.ravel() for a in np.meshgrid(gx, gy))
    hits = sum(_inside(px, py, v).astype(int) for _, v in spec.regions)
    if np.any(hits != 1):
        k = int(np.flatnonzero(hits != 1)[0])
        raise GridSpecError(
            f"{source}: regions do not partition the domain near ({px[k]:.3f}, {py[k]:.3f}) "
            f"(covered {int(hits[k])} times)")
    diag = np.linspace(max(xmin, ymin), min(xmax, ymax), 1201)
    if np.any(grid_classify(diag, diag, spec) != "A"):
        raise GridSpecError(f"{source}: the diagonal must lie in zone A")


def load_grid(path) -> ErrorGridSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GridSpecError(f"cannot read grid file {path}: {exc}") from None
    spec = _parse(text, path)
    _validate(spec, path)
    return spec


def builtin_grid(name="clarke") -> ErrorGridSpec:
    """Load a shipped grid: ``"clarke"`` or ``"dts"`` (approximate, see file notes)."""
    try:
        fname = _BUILTIN[name]
    except KeyError:
        raise GridSpecError(f"unknown grid {name!r}; choose from {sorted(_BUILTIN)}") from None
    with resources.as_file(resources.files(__package__) / "grids" / fname) as p:
        return load_grid(p)


def grid_classify(ref, pred, spec: ErrorGridSpec, tol=1e-9) -> np.ndarray:
    """Zone letter per point; points on a shared boundary take the lower-risk zone.

    Coordinates are clipped into the grid domain first.
    """
    ref = np.asarray(ref, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if ref.shape != pred.shape:
        raise ValueError(f"ref and pred lengths differ: {ref.shape} vs {pred.shape}")
    xmin, xmax, ymin, ymax = spec.domain
    px = np.clip(ref, xmin, xmax)
    py = np.clip(pred, ymin, ymax)
    out = np.full(px.shape, "", dtype="<U1")
    todo = np.ones(px.shape, dtype=bool)
    scale = tol * max(xmax - xmin, ymax - ymin)
    for zone in ZONES:
        for v in spec.polygons(zone):
            idx = np.flatnonzero(todo)
            if idx.size == 0:
                return out
            x, y = px[idx], py[idx]
            hit = _inside(x, y, v) | _on_boundary(x, y, v, scale)
            out[idx[hit]] = zone
            todo[idx[hit]] = False
    if np.any(todo):
        raise GridSpecError(f"grid {spec.name!r} leaves {int(todo.sum())} points unclassified")
    return out


def zone_codes(zones) -> np.ndarray:
    """Ordinal risk 1-5 for zone letters A-E."""
    lookup = {z: i + 1 for i, z in enumerate(ZONES)}
    return np.array([lookup[z] for z in np.asarray(zones).ravel()], dtype=np.int64)

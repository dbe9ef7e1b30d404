"""Regenerate ``src/gluq/metrics/grids/dts_approx.grid``.

The published DTS zone geometry is not reproduced here. This writes a
symmetric nested-band stand-in: zone k holds points with
``|pred - ref| <= max(a_k, p_k * ref)`` that are outside zone k-1, with the
absolute and relative half-widths meeting at 100 mg/dL.

Requires shapely (development only).
"""

from pathlib import Path

from shapely.geometry import MultiPolygon, Polygon, box
from shapely.geometry.polygon import orient

DOMAIN = 600.0
# (zone, relative half-width above 100 mg/dL); absolute half-width is 100 * p
BANDS = [("A", 0.15), ("B", 0.40), ("C", 0.70), ("D", 0.90)]
OUT = Path(__file__).resolve().parents[1] / "src/gluq/metrics/grids/dts_approx.grid"


def band(p):
    a = 100.0 * p
    far = 10 * DOMAIN
    upper = [(0.0, a), (100.0, 100.0 + a), (far, far * (1 + p))]
    lower = [(far, far * (1 - p)), (100.0, 100.0 - a), (0.0, -a)]
    return Polygon(upper + lower).intersection(box(0, 0, DOMAIN, DOMAIN))


def parts(geom):
    geoms = geom.geoms if isinstance(geom, MultiPolygon) else [geom]
    for g in geoms:
        if g.is_empty or g.area == 0:
            continue
        assert not g.interiors, "regions must be simply connected"
        coords = list(orient(g).exterior.coords)[:-1]
        yield " ".join(f"{x!r},{y!r}" for x, y in coords)


def main():
    lines = [
        "name: dts_approx",
        "version: 1",
        f"domain: 0 {DOMAIN:g} 0 {DOMAIN:g}",
        "notes: approximate stand-in for the DTS grid (symmetric nested bands); "
        "not the published zone geometry",
        "# generated by scripts/make_dts_grid.py",
    ]
    inner = None
    for zone, p in BANDS:
        b = band(p)
        region = b if inner is None else b.difference(inner)
        lines += [f"{zone}: {poly}" for poly in parts(region)]
        inner = b
    rest = box(0, 0, DOMAIN, DOMAIN).difference(inner)
    lines += [f"E: {poly}" for poly in parts(rest)]
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()

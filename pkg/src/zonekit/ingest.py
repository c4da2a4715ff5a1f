"""Readers and writers for every on-disk format the pipeline touches.

All tabular files are UTF-8 CSV with a header row and ``.`` as the
decimal separator; boundaries travel as GeoJSON polygons in planar
meters. Parsing is total: every input row either becomes a record or an
entry in the parse report, never silently dropped. The full schema
reference lives in FORMATS.md at the repository root.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import BaseGrid, FieldBoundary
from .surfaces import Surface


@dataclass(frozen=True)
class YieldRecord:
    timestamp: datetime
    x: float
    y: float
    yield_t_ha: float
    flagged: bool = False


@dataclass(frozen=True)
class BandPixel:
    x: float
    y: float
    bands: dict
    cloud_probability: float = 0.0


@dataclass(frozen=True)
class CellAttributes:
    cell: int
    values: dict


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str
    raw: str = ""


@dataclass
class ParseResult:
    records: list
    issues: list = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.issues)


_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


def _parse_flag(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a flag value: {text!r}")


def _parse_timestamp(text: str) -> datetime:
    t = text.strip()
    if t.endswith("Z"):  # fromisoformat rejects the Z suffix on 3.10
        t = t[:-1] + "+00:00"
    return datetime.fromisoformat(t)


def _float(text: str) -> float:
    v = float(text)
    if not np.isfinite(v):
        raise ValueError(f"non-finite value: {text!r}")
    return v


def _open_reader(path):
    fh = open(path, "r", encoding="utf-8", newline="")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise SchemaError(f"{path}: file is empty, expected a header row")
    return fh, reader, [h.strip() for h in header]


def _require_columns(path, header, required):
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
    return {c: header.index(c) for c in header}


def read_yield_csv(path) -> ParseResult:
    """Parse a combine yield log: timestamp, x, y, yield, flag."""
    fh, reader, header = _open_reader(path)
    cols = _require_columns(path, header, ["timestamp", "x", "y", "yield", "flag"])
    records, issues = [], []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(
                    YieldRecord(
                        timestamp=_parse_timestamp(row[cols["timestamp"]]),
                        x=_float(row[cols["x"]]),
                        y=_float(row[cols["y"]]),
                        yield_t_ha=_float(row[cols["yield"]]),
                        flagged=_parse_flag(row[cols["flag"]]),
                    )
                )
            except (ValueError, IndexError) as exc:
                issues.append(ParseIssue(lineno, str(exc), ",".join(row)))
    return ParseResult(records, issues)


def write_yield_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "x", "y", "yield", "flag"])
        for r in records:
            w.writerow(
                [
                    r.timestamp.isoformat(),
                    repr(float(r.x)),
                    repr(float(r.y)),
                    repr(float(r.yield_t_ha)),
                    "1" if r.flagged else "0",
                ]
            )


def read_band_raster(path, band_names) -> ParseResult:
    """Parse a band-raster point dump: x, y, one column per band.

    ``cloud_probability`` is optional and defaults to 0 when the column
    is absent. No filtering happens here; see :func:`cloud_filter`.
    """
    band_names = list(band_names)
    fh, reader, header = _open_reader(path)
    cols = _require_columns(path, header, ["x", "y"] + band_names)
    has_cloud = "cloud_probability" in cols
    records, issues = [], []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                cloud = _float(row[cols["cloud_probability"]]) if has_cloud else 0.0
                if not 0.0 <= cloud <= 1.0:
                    raise ValueError(f"cloud_probability outside [0, 1]: {cloud}")
                records.append(
                    BandPixel(
                        x=_float(row[cols["x"]]),
                        y=_float(row[cols["y"]]),
                        bands={b: _float(row[cols[b]]) for b in band_names},
                        cloud_probability=cloud,
                    )
                )
            except (ValueError, IndexError) as exc:
                issues.append(ParseIssue(lineno, str(exc), ",".join(row)))
    return ParseResult(records, issues)


def write_band_csv(path, pixels, band_names) -> None:
    band_names = list(band_names)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"] + band_names + ["cloud_probability"])
        for p in pixels:
            w.writerow(
                [repr(float(p.x)), repr(float(p.y))]
                + [repr(float(p.bands[b])) for b in band_names]
                + [repr(float(p.cloud_probability))]
            )


def cloud_filter(pixels, max_probability: float = 0.10) -> list:
    """Keep pixels whose cloud probability is strictly below the threshold."""
    return [p for p in pixels if p.cloud_probability < max_probability]


_TEXTURE = ("soil_clay", "soil_silt", "soil_sand")


def read_attributes_csv(path) -> ParseResult:
    """Parse a per-cell attribute table; must carry a ``cell`` column.

    Numeric attribute columns are read as floats; blank fields mean the
    attribute is absent for that cell. Rows violating the soil-texture
    closure (clay+silt+sand within [99, 101]) or the aspect range
    [0, 360) go to the parse report.
    """
    fh, reader, header = _open_reader(path)
    cols = _require_columns(path, header, ["cell"])
    attr_names = [c for c in header if c != "cell"]
    records, issues = [], []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = {}
                for name in attr_names:
                    text = row[cols[name]].strip()
                    if text:
                        values[name] = _float(text)
                if all(t in values for t in _TEXTURE):
                    total = sum(values[t] for t in _TEXTURE)
                    if not 99.0 <= total <= 101.0:
                        raise ValueError(f"soil texture sums to {total}, not ~100")
                if "aspect" in values and not 0.0 <= values["aspect"] < 360.0:
                    raise ValueError(f"aspect outside [0, 360): {values['aspect']}")
                records.append(CellAttributes(cell=int(row[cols["cell"]]), values=values))
            except (ValueError, IndexError) as exc:
                issues.append(ParseIssue(lineno, str(exc), ",".join(row)))
    return ParseResult(records, issues)


def read_boundary_geojson(path) -> FieldBoundary:
    """Load a GeoJSON Polygon (bare geometry, Feature, or FeatureCollection)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    geom = data
    if data.get("type") == "FeatureCollection":
        feats = data.get("features") or []
        if not feats:
            raise SchemaError(f"{path}: FeatureCollection has no features")
        geom = feats[0].get("geometry") or {}
    elif data.get("type") == "Feature":
        geom = data.get("geometry") or {}
    if geom.get("type") != "Polygon":
        raise SchemaError(f"{path}: expected a Polygon geometry, got {geom.get('type')!r}")
    rings = geom.get("coordinates") or []
    if not rings:
        raise SchemaError(f"{path}: polygon has no rings")
    return FieldBoundary(ring=np.asarray(rings[0], dtype=float),
                         holes=tuple(np.asarray(r, dtype=float) for r in rings[1:]))


def write_boundary_geojson(path, boundary: FieldBoundary) -> None:
    rings = [boundary.ring.tolist()] + [h.tolist() for h in boundary.holes]
    geom = {"type": "Polygon", "coordinates": rings}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "Feature", "geometry": geom, "properties": {}}, fh)
        fh.write("\n")


def write_grid_csv(path, grid: BaseGrid) -> None:
    centers = grid.centers()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "row", "col", "center_x", "center_y", "interior"])
        for i in range(grid.n_cells):
            row, col = i // grid.ncols, i % grid.ncols
            w.writerow(
                [
                    i,
                    row,
                    col,
                    repr(float(centers[i, 0])),
                    repr(float(centers[i, 1])),
                    "1" if grid.interior[i] else "0",
                ]
            )


def read_grid_csv(path) -> BaseGrid:
    fh, reader, header = _open_reader(path)
    cols = _require_columns(
        path, header, ["index", "row", "col", "center_x", "center_y", "interior"]
    )
    rows = []
    with fh:
        for row in reader:
            if row:
                rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: grid file has no cells")
    idx = np.array([int(r[cols["index"]]) for r in rows])
    order = np.argsort(idx)
    idx = idx[order]
    cc = np.array([int(r[cols["col"]]) for r in rows])[order]
    rr = np.array([int(r[cols["row"]]) for r in rows])[order]
    cx = np.array([float(r[cols["center_x"]]) for r in rows])[order]
    cy = np.array([float(r[cols["center_y"]]) for r in rows])[order]
    interior = np.array([r[cols["interior"]].strip() == "1" for r in rows])[order]
    ncols = int(cc.max()) + 1
    nrows = int(rr.max()) + 1
    if len(rows) != ncols * nrows or not np.array_equal(idx, np.arange(len(rows))):
        raise SchemaError(f"{path}: grid rows are not a dense row-major lattice")
    if ncols > 1:
        cell = float(cx[1] - cx[0])
    elif nrows > 1:
        cell = float(cy[ncols] - cy[0])
    else:
        raise SchemaError(f"{path}: cannot infer cell size from a single cell")
    return BaseGrid(
        origin_x=float(cx[0] - 0.5 * cell),
        origin_y=float(cy[0] - 0.5 * cell),
        cell_size=cell,
        ncols=ncols,
        nrows=nrows,
        interior=interior,
    )


def write_surface_csv(path, grid: BaseGrid, surface: Surface, variance: Surface | None = None) -> None:
    """Write interior cells as (cell, value[, variance]); missing -> empty field."""
    ids = grid.interior_ids()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        header = ["cell", surface.name]
        if variance is not None:
            header.append("variance")
        w.writerow(header)
        for i in ids:
            v = surface.values[i]
            row = [int(i), "" if np.isnan(v) else repr(float(v))]
            if variance is not None:
                s = variance.values[i]
                row.append("" if np.isnan(s) else repr(float(s)))
            w.writerow(row)


def read_surface_csv(path, grid: BaseGrid, column: str | None = None) -> Surface:
    """Read a (cell, value) CSV back onto a grid.

    ``column`` defaults to the second header field, so frequency-map and
    kriging outputs load without renaming.
    """
    fh, reader, header = _open_reader(path)
    if column is None:
        if len(header) < 2:
            raise SchemaError(f"{path}: need at least (cell, value) columns")
        column = header[1]
    cols = _require_columns(path, header, ["cell", column])
    values = np.full(grid.n_cells, np.nan)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i = int(row[cols["cell"]])
                if not 0 <= i < grid.n_cells:
                    raise ValueError(f"cell index {i} outside grid")
                text = row[cols[column]].strip()
                if text:
                    values[i] = float(text)
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return Surface(values, name=column)


def surface_geojson(grid: BaseGrid, surface: Surface) -> dict:
    """Interior cells as a GeoJSON FeatureCollection of center points."""
    centers = grid.centers()
    feats = []
    for i in grid.interior_ids():
        v = surface.values[i]
        feats.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [float(centers[i, 0]), float(centers[i, 1])],
                },
                "properties": {
                    "cell": int(i),
                    surface.name: None if np.isnan(v) else float(v),
                },
            }
        )
    return {"type": "FeatureCollection", "features": feats}

"""Yield frequency maps: normalization, multi-year stacking, stability classes.

Per year the cleaned yield surface is min-max normalized, LISA-coded to
{-1, 0, +1}, and the codes are summed across years into a per-cell
frequency YF bounded by the year count. Extremes mark stable high/low
zones; mid-range values mark unstable ground.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateDataError, NumericalError, SchemaError
from .geometry import BaseGrid
from .surfaces import Surface

HIGH_STABLE = "high-stable"
LOW_STABLE = "low-stable"
UNSTABLE = "unstable"


def minmax_normalize(surface: Surface) -> Surface:
    """Rescale defined values to [-1, +1]; min maps to -1, max to +1."""
    v = surface.values
    mask = ~np.isnan(v)
    if not mask.any():
        raise DegenerateDataError("cannot normalize an all-missing surface")
    lo, hi = float(v[mask].min()), float(v[mask].max())
    if hi == lo:
        raise DegenerateDataError("cannot normalize a constant surface (zero range)")
    out = np.full_like(v, np.nan)
    out[mask] = 2.0 * (v[mask] - lo) / (hi - lo) - 1.0
    return Surface(out, name=surface.name)


@dataclass
class FrequencyMap:
    """Summed cluster codes per cell over ``n_years`` layers."""

    cell_ids: np.ndarray     # cells defined in at least one year
    yf: np.ndarray           # int, in [-n_years, +n_years]
    n_years: int
    partial: np.ndarray      # True where at least one year was missing
    labels: np.ndarray | None = None
    frac: float | None = None


def stack_frequency(mc_layers) -> FrequencyMap:
    """Sum per-year cluster-code surfaces into a frequency map.

    All layers must live on the same grid. A cell missing in some year
    contributes 0 for that year and is flagged partial; cells missing in
    every year are dropped.
    """
    layers = list(mc_layers)
    if not layers:
        raise NumericalError("need at least one code layer to stack")
    n_cells = len(layers[0])
    if any(len(s) != n_cells for s in layers):
        raise NumericalError("code layers live on different grids")
    stacked = np.vstack([s.values for s in layers])
    defined = ~np.isnan(stacked)
    ever = defined.any(axis=0)
    yf = np.where(defined, np.nan_to_num(stacked), 0.0).sum(axis=0)
    partial = ever & ~defined.all(axis=0)
    ids = np.flatnonzero(ever)
    return FrequencyMap(
        cell_ids=ids,
        yf=yf[ids].astype(np.int64),
        n_years=len(layers),
        partial=partial[ids],
    )


def classify_stability(fm: FrequencyMap, frac: float = 0.6) -> FrequencyMap:
    """Label cells by YF against ``frac`` of the year count.

    ``YF >= frac * P`` is high-stable, ``YF <= -frac * P`` low-stable
    (both boundaries inclusive), anything between is unstable.
    """
    if not 0.0 < frac <= 1.0:
        raise ConfigError("stability fraction must be in (0, 1]")
    cut = frac * fm.n_years
    labels = np.where(
        fm.yf >= cut, HIGH_STABLE, np.where(fm.yf <= -cut, LOW_STABLE, UNSTABLE)
    )
    return replace(fm, labels=labels, frac=frac)


def yf_surface(fm: FrequencyMap, grid: BaseGrid) -> Surface:
    out = np.full(grid.n_cells, np.nan)
    out[fm.cell_ids] = fm.yf.astype(float)
    return Surface(out, name="YF")


@dataclass
class AttributeBin:
    low: float
    high: float
    count: int
    mean_yf: float
    yf_hist: np.ndarray  # counts for YF = -P .. +P


def attribute_report(fm: FrequencyMap, attributes, name: str, bins=5) -> list:
    """Summarize YF against one cell attribute, binned.

    ``attributes`` is an iterable of CellAttributes; ``bins`` is either a
    bin count (equal width over the attribute's range) or explicit edges.
    Only cells present in both the map and the table are counted.
    """
    table = {}
    available = set()
    for rec in attributes:
        available.update(rec.values)
        if name in rec.values:
            table[rec.cell] = rec.values[name]
    if not table:
        raise SchemaError(
            f"attribute {name!r} not found; available: {', '.join(sorted(available)) or 'none'}"
        )
    pairs = [
        (table[c], fm.yf[i])
        for i, c in enumerate(fm.cell_ids)
        if int(c) in table
    ]
    if not pairs:
        raise SchemaError(f"attribute {name!r} covers no frequency-map cells")
    vals = np.array([p[0] for p in pairs])
    yfs = np.array([p[1] for p in pairs])
    if np.isscalar(bins):
        lo, hi = float(vals.min()), float(vals.max())
        if hi == lo:
            edges = np.array([lo, hi])
        else:
            edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    p = fm.n_years
    out = []
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        last = b == len(edges) - 2
        sel = (vals >= lo) & ((vals <= hi) if last else (vals < hi))
        hist = np.zeros(2 * p + 1, dtype=np.int64)
        if sel.any():
            got = yfs[sel]
            np.add.at(hist, got + p, 1)
            mean = float(got.mean())
        else:
            mean = float("nan")
        out.append(
            AttributeBin(
                low=float(lo), high=float(hi), count=int(sel.sum()),
                mean_yf=mean, yf_hist=hist,
            )
        )
    return out


def write_freq_csv(path, fm: FrequencyMap) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "YF", "class", "partial"])
        labels = fm.labels if fm.labels is not None else [""] * len(fm.cell_ids)
        for i in range(len(fm.cell_ids)):
            w.writerow(
                [
                    int(fm.cell_ids[i]),
                    int(fm.yf[i]),
                    labels[i],
                    "1" if fm.partial[i] else "0",
                ]
            )


def read_freq_csv(path) -> FrequencyMap:
    """Load a frequency map written by :func:`write_freq_csv`.

    The year count is not stored in the file; it is recovered as
    ``max(|YF|)`` unless labels are present, in which case it only
    matters for reports and the same recovery applies.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["cell", "YF"]:
            raise SchemaError(f"{path}: expected a (cell, YF, class, partial) file")
        cells, yfs, labels, partial = [], [], [], []
        for row in reader:
            if not row:
                continue
            cells.append(int(row[0]))
            yfs.append(int(row[1]))
            labels.append(row[2] if len(row) > 2 else "")
            partial.append(len(row) > 3 and row[3].strip() == "1")
    yf = np.array(yfs, dtype=np.int64)
    lab = np.array(labels)
    return FrequencyMap(
        cell_ids=np.array(cells, dtype=np.int64),
        yf=yf,
        n_years=int(np.abs(yf).max()) if len(yf) else 0,
        partial=np.array(partial, dtype=bool),
        labels=lab if any(labels) else None,
    )


def write_report_csv(path, report, n_years: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        hist_cols = [f"yf_{k:+d}" for k in range(-n_years, n_years + 1)]
        w.writerow(["bin_low", "bin_high", "count", "mean_YF"] + hist_cols)
        for b in report:
            w.writerow(
                [repr(b.low), repr(b.high), b.count,
                 "" if np.isnan(b.mean_yf) else repr(b.mean_yf)]
                + [int(c) for c in b.yf_hist]
            )

"""Field boundary geometry and time-independent base-grid construction.

Coordinates are planar meters in a projected CRS; no geodetic handling
happens anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGeometryError


def _as_closed_ring(coords) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InvalidGeometryError("ring must be an (n, 2) coordinate array")
    if not np.isfinite(ring).all():
        raise InvalidGeometryError("ring contains non-finite coordinates")
    if len(ring) and not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    if len(np.unique(ring[:-1], axis=0)) < 3:
        raise InvalidGeometryError("ring needs at least 3 distinct vertices")
    return ring


def ring_area(ring: np.ndarray) -> float:
    """Signed shoelace area of a closed ring."""
    x, y = ring[:-1, 0], ring[:-1, 1]
    xn, yn = ring[1:, 0], ring[1:, 1]
    return 0.5 * float(np.sum(x * yn - xn * y))


@dataclass(frozen=True)
class FieldBoundary:
    """Closed outer ring plus optional hole rings, all in planar meters."""

    ring: np.ndarray
    holes: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ring", _as_closed_ring(self.ring))
        object.__setattr__(
            self, "holes", tuple(_as_closed_ring(h) for h in self.holes)
        )
        if abs(ring_area(self.ring)) <= 0.0:
            raise InvalidGeometryError("boundary polygon has zero area")

    @property
    def area(self) -> float:
        a = abs(ring_area(self.ring))
        return a - sum(abs(ring_area(h)) for h in self.holes)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (
            float(self.ring[:, 0].min()),
            float(self.ring[:, 1].min()),
            float(self.ring[:, 0].max()),
            float(self.ring[:, 1].max()),
        )

    def rings(self):
        yield self.ring
        yield from self.holes


def points_in_polygon(xy, boundary: FieldBoundary) -> np.ndarray:
    """Even-odd membership test for an (n, 2) array of points.

    Points exactly on any ring edge (vertices included) count as inside.
    Holes flip parity, so a point inside a hole is outside the field.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    px, py = xy[:, 0], xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    on_edge = np.zeros(len(xy), dtype=bool)
    for ring in boundary.rings():
        x1, y1 = ring[:-1, 0], ring[:-1, 1]
        x2, y2 = ring[1:, 0], ring[1:, 1]
        for ax, ay, bx, by in zip(x1, y1, x2, y2):
            # crossing-number toggle (half-open in y avoids double counts)
            cond = (ay > py) != (by > py)
            if cond.any():
                xint = (bx - ax) * (py - ay) / (by - ay) + ax
                inside ^= cond & (px < xint)
            # exact on-segment test
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            within = (
                (px >= min(ax, bx))
                & (px <= max(ax, bx))
                & (py >= min(ay, by))
                & (py <= max(ay, by))
            )
            on_edge |= (cross == 0.0) & within
    return inside | on_edge


def point_in_polygon(p, boundary: FieldBoundary) -> bool:
    """Single-point version of :func:`points_in_polygon`."""
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :], boundary)[0])


def distances_to_boundary(xy, boundary: FieldBoundary) -> np.ndarray:
    """Minimum point-to-segment distance over every ring segment."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    px, py = xy[:, 0], xy[:, 1]
    best = np.full(len(xy), np.inf)
    for ring in boundary.rings():
        a = ring[:-1]
        b = ring[1:]
        for (ax, ay), (bx, by) in zip(a, b):
            dx, dy = bx - ax, by - ay
            seg2 = dx * dx + dy * dy
            if seg2 == 0.0:
                d2 = (px - ax) ** 2 + (py - ay) ** 2
            else:
                t = np.clip(((px - ax) * dx + (py - ay) * dy) / seg2, 0.0, 1.0)
                d2 = (px - (ax + t * dx)) ** 2 + (py - (ay + t * dy)) ** 2
            np.minimum(best, d2, out=best)
    return np.sqrt(best)


def distance_to_boundary(p, boundary: FieldBoundary) -> float:
    return float(distances_to_boundary(np.asarray(p, dtype=float)[None, :], boundary)[0])


@dataclass(frozen=True)
class BaseGrid:
    """Regular lattice of square cells covering a field's bounding box.

    Cell indices are dense and row-major: ``index = row * ncols + col``.
    They stay stable across data layers, which makes the index the join
    key for every surface produced downstream. ``interior`` marks cells
    whose center is inside the boundary and at least ``border_width``
    meters away from it.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    ncols: int
    nrows: int
    interior: np.ndarray = field(repr=False)
    border_width: float = 0.0

    @property
    def n_cells(self) -> int:
        return self.ncols * self.nrows

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    def rowcol(self, index):
        index = np.asarray(index)
        return index // self.ncols, index % self.ncols

    def index_of(self, row, col):
        return np.asarray(row) * self.ncols + np.asarray(col)

    def centers(self) -> np.ndarray:
        """(n_cells, 2) array of cell-center coordinates in index order."""
        idx = np.arange(self.n_cells)
        row, col = self.rowcol(idx)
        cx = self.origin_x + (col + 0.5) * self.cell_size
        cy = self.origin_y + (row + 0.5) * self.cell_size
        return np.column_stack([cx, cy])

    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    def interior_centers(self) -> np.ndarray:
        return self.centers()[self.interior]


def build_grid(
    boundary: FieldBoundary,
    cell_size: float = 10.0,
    border_width: float = 20.0,
) -> BaseGrid:
    """Lay a square-cell lattice over the boundary's bounding box.

    The origin snaps down to a multiple of ``cell_size`` so reruns and
    different data layers land on identical lattices. A cell is interior
    iff its center is inside the polygon and its center is at least
    ``border_width`` meters from the nearest boundary segment.
    """
    if cell_size <= 0:
        raise InvalidGeometryError("cell_size must be positive")
    if border_width < 0:
        raise InvalidGeometryError("border_width must be non-negative")
    minx, miny, maxx, maxy = boundary.bbox
    ox = math.floor(minx / cell_size) * cell_size
    oy = math.floor(miny / cell_size) * cell_size
    ncols = max(1, math.ceil((maxx - ox) / cell_size))
    nrows = max(1, math.ceil((maxy - oy) / cell_size))

    idx = np.arange(ncols * nrows)
    col = idx % ncols
    row = idx // ncols
    centers = np.column_stack(
        [ox + (col + 0.5) * cell_size, oy + (row + 0.5) * cell_size]
    )
    interior = points_in_polygon(centers, boundary)
    if border_width > 0 and interior.any():
        far = distances_to_boundary(centers[interior], boundary) >= border_width
        ids = np.flatnonzero(interior)
        interior = np.zeros_like(interior)
        interior[ids[far]] = True
    return BaseGrid(
        origin_x=ox,
        origin_y=oy,
        cell_size=float(cell_size),
        ncols=ncols,
        nrows=nrows,
        interior=interior,
        border_width=float(border_width),
    )

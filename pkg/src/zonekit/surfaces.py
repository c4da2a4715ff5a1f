"""Per-cell value layers aligned to a base grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BaseGrid


@dataclass
class Surface:
    """One float per grid cell, NaN where the value is missing.

    ``values[i]`` belongs to grid cell index ``i``; exterior cells are
    missing by construction.
    """

    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def mask(self) -> np.ndarray:
        """Boolean array, True where a value is present."""
        return ~np.isnan(self.values)

    def defined_ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self) -> int:
        return len(self.values)


def empty_surface(grid: BaseGrid, name: str = "value") -> Surface:
    return Surface(np.full(grid.n_cells, np.nan), name=name)


def surface_from_interior(grid: BaseGrid, interior_values, name: str = "value") -> Surface:
    """Expand values given per interior cell (in interior-id order) to a full surface."""
    interior_values = np.asarray(interior_values, dtype=float)
    ids = grid.interior_ids()
    if len(interior_values) != len(ids):
        raise ValueError(
            f"expected {len(ids)} interior values, got {len(interior_values)}"
        )
    out = np.full(grid.n_cells, np.nan)
    out[ids] = interior_values
    return Surface(out, name=name)

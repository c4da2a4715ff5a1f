"""Spatial weights, Moran's I, and local Moran (LISA) cluster coding.

Local significance uses conditional permutations: for cell i the value
stays put while its neighbor slots are filled from the other cells. The
draw is reproducible by contract: per cell, a generator seeded with
``[seed, global_cell_index]`` produces a ``(permutations, k)`` integer
matrix via ``integers(0, n_other)``, and rows containing duplicate
indices are redrawn in bulk until none remain. Parallel and serial runs
therefore agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateDataError, NumericalError
from .geometry import BaseGrid
from .surfaces import Surface

QUEEN_OFFSETS = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
)


@dataclass
class SpatialWeights:
    """Row-standardized neighbor lists over a grid's interior cells."""

    cell_ids: np.ndarray        # global cell indices, ascending
    neighbors: list             # per cell: positions into cell_ids
    weights: list               # per cell: weights, rows sum to 1
    scheme: str
    row_standardized: bool = True

    @property
    def n(self) -> int:
        return len(self.cell_ids)

    @property
    def islands(self) -> np.ndarray:
        """Positions of cells with no neighbors."""
        return np.array([i for i, nb in enumerate(self.neighbors) if len(nb) == 0], dtype=int)

    def total_weight(self) -> float:
        return float(sum(w.sum() for w in self.weights))


def build_weights(grid: BaseGrid, scheme: str = "queen", band: float = 15.0) -> SpatialWeights:
    """Connect interior cells by queen contiguity or a distance band.

    Queen links the up-to-8 lattice neighbors; the distance band links
    cells whose centers are within ``band`` meters. Rows are
    standardized to sum to 1; isolated cells get an empty row.
    """
    ids = grid.interior_ids()
    if len(ids) < 2:
        raise DegenerateDataError("need at least 2 interior cells for weights")
    pos_of = np.full(grid.n_cells, -1, dtype=np.int64)
    pos_of[ids] = np.arange(len(ids))
    pairs_i, pairs_j = [], []
    if scheme == "queen":
        row, col = grid.rowcol(ids)
        for dr, dc in QUEEN_OFFSETS:
            r2, c2 = row + dr, col + dc
            ok = (r2 >= 0) & (r2 < grid.nrows) & (c2 >= 0) & (c2 < grid.ncols)
            j = pos_of[grid.index_of(r2[ok], c2[ok])]
            hit = j >= 0
            pairs_i.append(np.flatnonzero(ok)[hit])
            pairs_j.append(j[hit])
    elif scheme == "distance":
        if band <= 0:
            raise ConfigError("distance band must be positive")
        tree = cKDTree(grid.interior_centers())
        pairs = tree.query_pairs(band, output_type="ndarray")
        pairs_i = [pairs[:, 0], pairs[:, 1]]
        pairs_j = [pairs[:, 1], pairs[:, 0]]
    else:
        raise ConfigError(f"unknown weights scheme: {scheme!r}")
    src = np.concatenate(pairs_i)
    dst = np.concatenate(pairs_j)
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    starts = np.searchsorted(src, np.arange(len(ids) + 1))
    neighbors, weights = [], []
    for i in range(len(ids)):
        nb = np.sort(dst[starts[i] : starts[i + 1]])
        neighbors.append(nb)
        k = len(nb)
        weights.append(np.full(k, 1.0 / k) if k else np.empty(0))
    return SpatialWeights(cell_ids=ids, neighbors=neighbors, weights=weights, scheme=scheme)


def _values_on_weights(surface: Surface, w: SpatialWeights) -> np.ndarray:
    x = surface.values[w.cell_ids]
    if np.isnan(x).any():
        raise NumericalError(
            "surface is missing values on weighted cells; interpolate first"
        )
    return x


def _lag(w: SpatialWeights, z: np.ndarray) -> np.ndarray:
    out = np.zeros(w.n)
    for i, (nb, wt) in enumerate(zip(w.neighbors, w.weights)):
        if len(nb):
            out[i] = float(wt @ z[nb])
    return out


def global_moran(surface: Surface, w: SpatialWeights) -> float:
    """Moran's I over the weighted cells; positive means clustering."""
    x = _values_on_weights(surface, w)
    z = x - x.mean()
    denom = float((z**2).sum())
    if denom == 0.0:
        raise DegenerateDataError("Moran's I is undefined for a constant surface")
    s0 = w.total_weight()
    if s0 == 0.0:
        raise DegenerateDataError("all cells are isolated")
    return float(w.n / s0 * (z * _lag(w, z)).sum() / denom)


@dataclass
class LisaResult:
    cell_ids: np.ndarray
    local_i: np.ndarray
    p_value: np.ndarray     # NaN when permutations == 0 or cell is isolated
    quadrant: np.ndarray    # "HH" | "LL" | "HL" | "LH"
    mc: np.ndarray          # +1 significant HH, -1 significant LL, else 0
    global_i: float
    permutations: int
    alpha: float
    seed: int


def permutation_indices(rng, n_other: int, k: int, permutations: int) -> np.ndarray:
    """Distinct neighbor-slot indices per permutation, by bulk redraw.

    Part of the reproducibility contract: one ``integers`` call for the
    full matrix, then rows with duplicates are redrawn together until
    every row holds k distinct indices.
    """
    idx = rng.integers(0, n_other, size=(permutations, k))
    if k > 1:
        while True:
            srt = np.sort(idx, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            n_bad = int(bad.sum())
            if n_bad == 0:
                break
            idx[bad] = rng.integers(0, n_other, size=(n_bad, k))
    return idx


def local_moran(
    surface: Surface,
    w: SpatialWeights,
    permutations: int = 999,
    alpha: float = 0.05,
    seed: int = 0,
) -> LisaResult:
    """Local Moran with conditional-permutation pseudo p-values.

    Values are standardized by the population stdev, so the mean of the
    local statistics equals global Moran's I under row-standardized
    weights. The two-sided pseudo p-value is
    ``(#{|I_perm| >= |I_obs|} + 1) / (permutations + 1)``. Cluster codes:
    +1 for significant HH, -1 for significant LL, 0 otherwise (spatial
    outliers HL/LH and non-significant cells).
    """
    if permutations < 0:
        raise ConfigError("permutations must be >= 0")
    if not 0.0 < alpha <= 1.0:
        raise ConfigError("alpha must be in (0, 1]")
    x = _values_on_weights(surface, w)
    n = w.n
    z = x - x.mean()
    sigma = float(np.sqrt((z**2).mean()))
    if sigma == 0.0:
        raise DegenerateDataError("local Moran is undefined for a constant surface")
    zs = z / sigma
    lag = _lag(w, zs)
    local_i = zs * lag

    p = np.full(n, np.nan)
    if permutations > 0:
        for i in range(n):
            k = len(w.neighbors[i])
            if k == 0:
                continue
            rng = np.random.default_rng([seed, int(w.cell_ids[i])])
            others = np.delete(zs, i)
            idx = permutation_indices(rng, n - 1, k, permutations)
            lag_perm = others[idx] @ w.weights[i]
            count = int((np.abs(zs[i] * lag_perm) >= abs(local_i[i])).sum())
            p[i] = (count + 1) / (permutations + 1)

    high = zs > 0
    lag_high = lag > 0
    quadrant = np.where(
        high, np.where(lag_high, "HH", "HL"), np.where(lag_high, "LH", "LL")
    )
    significant = ~np.isnan(p) & (p <= alpha)
    mc = np.zeros(n, dtype=np.int8)
    mc[(quadrant == "HH") & significant] = 1
    mc[(quadrant == "LL") & significant] = -1

    return LisaResult(
        cell_ids=w.cell_ids,
        local_i=local_i,
        p_value=p,
        quadrant=quadrant,
        mc=mc,
        global_i=global_moran(surface, w),
        permutations=permutations,
        alpha=alpha,
        seed=seed,
    )


def mc_surface(result: LisaResult, grid: BaseGrid) -> Surface:
    """Expand a LISA result's cluster codes to a full-grid surface."""
    out = np.full(grid.n_cells, np.nan)
    out[result.cell_ids] = result.mc.astype(float)
    return Surface(out, name="MC")


def write_lisa_csv(path, result: LisaResult) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "local_I", "p", "quadrant", "MC"])
        for i in range(len(result.cell_ids)):
            pv = result.p_value[i]
            w.writerow(
                [
                    int(result.cell_ids[i]),
                    repr(float(result.local_i[i])),
                    "" if np.isnan(pv) else repr(float(pv)),
                    result.quadrant[i],
                    int(result.mc[i]),
                ]
            )

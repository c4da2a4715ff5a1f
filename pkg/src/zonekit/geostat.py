"""Spatial estimation onto the base grid.

Covers the empirical semivariogram, exponential model fitting, ordinary
kriging, inverse-distance weighting, and radius-based mean smoothing.

The exponential model uses the effective-range convention: the
semivariance reaches 95% of the sill at ``effective_range`` (factor 3 in
the exponent). Fitted numbers are not comparable across tools that use
the raw range parameter instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spl
from scipy import ndimage
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import DegenerateDataError, NumericalError, VariogramFitError
from .geometry import BaseGrid
from .surfaces import Surface, empty_surface, surface_from_interior


@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram parameters; ``sill`` is the total sill."""

    nugget: float
    sill: float
    effective_range: float

    def __post_init__(self):
        if not 0.0 <= self.nugget <= self.sill:
            raise NumericalError("variogram needs 0 <= nugget <= sill")
        if self.effective_range <= 0.0:
            raise NumericalError("variogram effective_range must be positive")

    @property
    def partial_sill(self) -> float:
        return self.sill - self.nugget


@dataclass
class EmpiricalVariogram:
    """Binned semivariance estimates: lag centers, gamma, pair counts."""

    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray


def variogram_value(model: VariogramModel, h) -> np.ndarray:
    """Evaluate the model; gamma(0) = 0 so kriging honors data exactly."""
    h = np.asarray(h, dtype=float)
    g = model.nugget + model.partial_sill * (1.0 - np.exp(-3.0 * h / model.effective_range))
    return np.where(h > 0.0, g, 0.0)


def empirical_variogram(xy, values, lag_width: float, max_lag: float) -> EmpiricalVariogram:
    """Bin all point pairs by distance and average the squared differences.

    Bin ``k`` covers distances in ``[k*lag_width, (k+1)*lag_width)`` and
    holds ``sum((z_i - z_j)^2) / (2 * n_pairs)``. Pairs at or beyond
    ``max_lag`` are dropped, and empty bins are omitted.
    """
    xy = np.asarray(xy, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(xy) < 2:
        raise DegenerateDataError("need at least 2 points for a variogram")
    if lag_width <= 0 or max_lag <= 0:
        raise NumericalError("lag_width and max_lag must be positive")
    nbins = int(np.ceil(max_lag / lag_width))
    sums = np.zeros(nbins)
    counts = np.zeros(nbins, dtype=np.int64)
    any_separated = False
    block = 512
    for i0 in range(0, len(xy), block):
        i1 = min(i0 + block, len(xy))
        d = cdist(xy[i0:i1], xy)
        dz2 = (values[i0:i1, None] - values[None, :]) ** 2
        # keep each unordered pair once: j > i
        jj = np.arange(len(xy))[None, :]
        ii = np.arange(i0, i1)[:, None]
        keep = (jj > ii) & (d < nbins * lag_width)
        if not any_separated:
            any_separated = bool(((d > 0) & (jj > ii)).any())
        b = (d[keep] / lag_width).astype(np.int64)
        np.add.at(sums, b, dz2[keep])
        np.add.at(counts, b, 1)
    if not any_separated:
        raise DegenerateDataError("all points are coincident")
    filled = counts > 0
    lags = (np.flatnonzero(filled) + 0.5) * lag_width
    gamma = sums[filled] / (2.0 * counts[filled])
    return EmpiricalVariogram(lags=lags, gamma=gamma, counts=counts[filled])


def fit_exponential(emp: EmpiricalVariogram, max_iter: int = 10000) -> VariogramModel:
    """Fit (nugget, sill, effective range) to binned semivariances.

    Minimizes the pair-count-weighted squared error with a bounded
    Nelder-Mead search over (nugget, partial sill, range), all kept
    non-negative, so the fitted model always satisfies the invariants.
    """
    if len(emp.lags) < 3:
        raise NumericalError("need at least 3 non-empty bins to fit a variogram")
    lags = np.asarray(emp.lags, dtype=float)
    gamma = np.asarray(emp.gamma, dtype=float)
    w = np.asarray(emp.counts, dtype=float)
    w = w / w.sum()
    scale = max(gamma.max(), 1e-12)

    def objective(p):
        nugget, psill, erange = p
        g = nugget + psill * (1.0 - np.exp(-3.0 * lags / erange))
        return float(np.sum(w * ((g - gamma) / scale) ** 2))

    nugget0 = max(float(gamma[0]), 0.0)
    psill0 = max(float(gamma.max() - nugget0), scale * 1e-3)
    near = np.flatnonzero(gamma >= nugget0 + 0.95 * psill0)
    range0 = float(lags[near[0]]) if len(near) else float(lags[-1]) * 0.6
    x0 = np.array([nugget0, psill0, max(range0, lags[0])])
    bounds = [(0.0, None), (0.0, None), (lags[0] * 1e-3, None)]
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": max_iter, "maxfev": 2 * max_iter, "fatol": 1e-10, "xatol": 1e-8},
    )
    nugget, psill, erange = res.x
    model = VariogramModel(
        nugget=float(nugget),
        sill=float(nugget + psill),
        effective_range=float(erange),
    )
    if not res.success:
        raise VariogramFitError(
            f"variogram fit did not converge after {res.nit} iterations", best=model
        )
    return model


@dataclass
class KrigeResult:
    estimate: Surface
    variance: Surface
    weight_sums: np.ndarray  # per interior cell, should all be ~1
    model: VariogramModel
    n_points: int
    mode: str  # "global" or "local"


def _dedup_points(xy, values):
    uniq, inverse = np.unique(xy, axis=0, return_inverse=True)
    if len(uniq) == len(xy):
        return xy, values
    sums = np.zeros(len(uniq))
    counts = np.zeros(len(uniq))
    np.add.at(sums, inverse, values)
    np.add.at(counts, inverse, 1.0)
    return uniq, sums / counts


def ordinary_krige(
    xy,
    values,
    model: VariogramModel,
    grid: BaseGrid,
    max_neighbors: int = 64,
    global_threshold: int = 3000,
) -> KrigeResult:
    """Ordinary kriging of scattered points onto interior cell centers.

    Solves the standard system (semivariance matrix bordered by the
    unbiasedness constraint) once via LU when the point count is at most
    ``global_threshold``; larger sets switch to per-cell systems over the
    ``max_neighbors`` nearest points, solved as a batch. Duplicate
    coordinates are averaged before solving. Returns the estimate, the
    kriging variance (clamped at zero), and the per-cell weight sums.
    """
    xy = np.asarray(xy, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(xy) < 2:
        raise DegenerateDataError("kriging needs at least 2 points")
    xy, values = _dedup_points(xy, values)
    if len(xy) < 2:
        raise DegenerateDataError("kriging needs 2 non-coincident points")
    targets = grid.interior_centers()
    if len(targets) == 0:
        raise NumericalError("grid has no interior cells")

    if len(xy) <= global_threshold:
        est, var, wsum = _krige_global(xy, values, model, targets)
        mode = "global"
    else:
        est, var, wsum = _krige_local(xy, values, model, targets, max_neighbors)
        mode = "local"
    return KrigeResult(
        estimate=surface_from_interior(grid, est, name="yield"),
        variance=surface_from_interior(grid, var, name="variance"),
        weight_sums=wsum,
        model=model,
        n_points=len(xy),
        mode=mode,
    )


def _krige_global(xy, values, model, targets):
    n = len(xy)
    a = np.empty((n + 1, n + 1))
    a[:n, :n] = variogram_value(model, cdist(xy, xy))
    a[n, :] = 1.0
    a[:, n] = 1.0
    a[n, n] = 0.0
    lu = spl.lu_factor(a, check_finite=False)
    b = np.empty((n + 1, len(targets)))
    b[:n] = variogram_value(model, cdist(xy, targets))
    b[n] = 1.0
    with np.errstate(all="ignore"):
        w = spl.lu_solve(lu, b, check_finite=False)
    if not np.isfinite(w).all():
        raise NumericalError("kriging system is singular")
    est = values @ w[:n]
    var = np.maximum(np.sum(w[:n] * b[:n], axis=0) + w[n], 0.0)
    return est, var, w[:n].sum(axis=0)


def _krige_local(xy, values, model, targets, max_neighbors):
    n = len(xy)
    k = min(max_neighbors, n)
    tree = cKDTree(xy)
    _, nbr = tree.query(targets, k=k)
    nbr = np.atleast_2d(nbr)
    m = len(targets)
    pts = xy[nbr]  # (m, k, 2)
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    a = np.empty((m, k + 1, k + 1))
    a[:, :k, :k] = variogram_value(model, np.sqrt((diff**2).sum(-1)))
    a[:, k, :] = 1.0
    a[:, :, k] = 1.0
    a[:, k, k] = 0.0
    b = np.empty((m, k + 1, 1))
    b[:, :k, 0] = variogram_value(
        model, np.sqrt(((pts - targets[:, None, :]) ** 2).sum(-1))
    )
    b[:, k, 0] = 1.0
    try:
        w = np.linalg.solve(a, b)[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("a local kriging system is singular") from exc
    est = np.sum(w[:, :k] * values[nbr], axis=1)
    var = np.maximum(np.sum(w[:, :k] * b[:, :k, 0], axis=1) + w[:, k], 0.0)
    return est, var, w[:, :k].sum(axis=1)


def idw(xy, values, grid: BaseGrid, power: float = 2.0, radius: float = 30.0) -> Surface:
    """Inverse-distance-weighted estimate at interior cell centers.

    Uses ``w = d**-power`` over points within ``radius``; a point at
    exactly zero distance short-circuits to its own value. Cells with no
    point in range stay missing.
    """
    xy = np.asarray(xy, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(xy) == 0:
        raise DegenerateDataError("idw needs at least 1 point")
    if radius <= 0 or power <= 0:
        raise NumericalError("idw radius and power must be positive")
    targets = grid.interior_centers()
    tree = cKDTree(xy)
    hits = tree.query_ball_point(targets, radius)
    out = np.full(len(targets), np.nan)
    for t, ids in enumerate(hits):
        if not ids:
            continue
        ids = np.asarray(ids)
        d = np.sqrt(((xy[ids] - targets[t]) ** 2).sum(axis=1))
        zero = np.flatnonzero(d == 0.0)
        if len(zero):
            out[t] = values[ids[zero[0]]]
            continue
        w = d**-power
        out[t] = float((w * values[ids]).sum() / w.sum())
    return surface_from_interior(grid, out)


def neighborhood_offsets(cell_size: float, radius: float) -> np.ndarray:
    """Lattice offsets (drow, dcol) whose center distance is within radius."""
    reach = int(np.floor(radius / cell_size))
    dr, dc = np.mgrid[-reach : reach + 1, -reach : reach + 1]
    keep = (dr**2 + dc**2) * cell_size**2 <= radius**2
    return np.column_stack([dr[keep], dc[keep]])


def convolve_mean(surface: Surface, grid: BaseGrid, radius: float = 19.0) -> Surface:
    """Mean over all non-missing cells whose centers lie within ``radius``.

    The neighborhood includes the cell itself; missing cells stay
    missing and never contribute to their neighbors' averages.
    """
    if len(surface) != grid.n_cells:
        raise NumericalError("surface does not match the grid")
    vals = surface.values.reshape(grid.nrows, grid.ncols)
    valid = ~np.isnan(vals)
    offsets = neighborhood_offsets(grid.cell_size, radius)
    reach = int(np.abs(offsets).max()) if len(offsets) else 0
    kernel = np.zeros((2 * reach + 1, 2 * reach + 1))
    kernel[offsets[:, 0] + reach, offsets[:, 1] + reach] = 1.0
    sums = ndimage.convolve(np.where(valid, vals, 0.0), kernel, mode="constant", cval=0.0)
    counts = ndimage.convolve(valid.astype(float), kernel, mode="constant", cval=0.0)
    out = np.full_like(vals, np.nan)
    ok = valid & (counts > 0)
    out[ok] = sums[ok] / counts[ok]
    return Surface(out.reshape(-1), name=surface.name)

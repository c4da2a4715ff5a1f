"""Temporal pre-processing of raw combine yield logs.

The stages run in a fixed order: machine-flagged removal, crop range
filter, global z-score outlier removal, sort by timestamp, Hampel filter
with window-mean imputation, trailing moving average. Spatial smoothing
(kriging, convolution) lives in :mod:`zonekit.geostat`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

# consistency factor turning MAD into a stdev estimate for normal data
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class CleaningConfig:
    yield_min: float = 1.0
    yield_max: float = 16.0
    zscore_limit: float = 3.0
    hampel_window: int = 7
    hampel_nsigma: float = 3.0
    ma_window: int = 6

    def __post_init__(self):
        if not self.yield_min < self.yield_max:
            raise ConfigError("yield_min must be below yield_max")
        if self.hampel_window < 3 or self.ma_window < 3:
            raise ConfigError("filter windows must be at least 3 samples")
        if self.hampel_window % 2 == 0:
            raise ConfigError("hampel_window must be odd")
        if self.zscore_limit <= 0 or self.hampel_nsigma <= 0:
            raise ConfigError("z-score and Hampel limits must be positive")


@dataclass
class CleanStats:
    """Per-stage bookkeeping for run manifests and reports."""

    n_input: int = 0
    n_flagged: int = 0
    n_out_of_range: int = 0
    n_zscore: int = 0
    n_imputed: int = 0
    mean_before: float = float("nan")
    std_before: float = float("nan")
    mean_after: float = float("nan")
    std_after: float = float("nan")


def _yields(records) -> np.ndarray:
    return np.array([r.yield_t_ha for r in records], dtype=float)


def remove_flagged(records) -> list:
    """Drop records the machine marked erroneous; order preserved."""
    return [r for r in records if not r.flagged]


def range_filter(records, yield_min: float, yield_max: float) -> list:
    """Keep records with yield_min <= yield <= yield_max (inclusive bounds)."""
    if not yield_min < yield_max:
        raise ConfigError("range filter needs yield_min < yield_max")
    return [r for r in records if yield_min <= r.yield_t_ha <= yield_max]


def zscore_filter(records, limit: float = 3.0) -> list:
    """Remove global outliers with |yield - mean| / stdev > limit.

    Mean and stdev are computed once over the input (single pass, not
    iterative). Zero variance keeps everything and warns instead of
    raising, since a constant field is legitimate data.
    """
    if len(records) < 2:
        return list(records)
    y = _yields(records)
    std = float(y.std())
    if std == 0.0:
        warnings.warn("zero yield variance, z-score filter is a no-op")
        return list(records)
    z = np.abs(y - y.mean()) / std
    return [r for r, keep in zip(records, z <= limit) if keep]


def sort_by_time(records) -> list:
    return sorted(records, key=lambda r: r.timestamp)


def hampel_impute(records, window: int = 7, nsigma: float = 3.0) -> tuple[list, int]:
    """Replace rolling-window outliers by the window mean.

    Works on the time-sorted series (sorts if needed). For each full
    centered window the center sample is an outlier when
    ``|x - median| > nsigma * 1.4826 * MAD``; zero-MAD windows impute
    only if the center differs from the median. Statistics always come
    from the original input values, so a run on its own output cannot
    cascade. Returns the new records and the imputation count.
    """
    if window % 2 == 0 or window < 3:
        raise ConfigError("hampel window must be odd and >= 3")
    recs = list(records)
    if any(
        recs[i].timestamp > recs[i + 1].timestamp for i in range(len(recs) - 1)
    ):
        recs = sort_by_time(recs)
    if len(recs) < window:
        warnings.warn("fewer records than the Hampel window, nothing imputed")
        return recs, 0
    y = _yields(recs)
    half = window // 2
    out = list(recs)
    n_imputed = 0
    for i in range(half, len(recs) - half):
        win = y[i - half : i + half + 1]
        med = float(np.median(win))
        mad = float(np.median(np.abs(win - med)))
        dev = abs(y[i] - med)
        if (mad > 0.0 and dev > nsigma * MAD_SCALE * mad) or (mad == 0.0 and dev > 0.0):
            out[i] = replace(recs[i], yield_t_ha=float(win.mean()))
            n_imputed += 1
    return out, n_imputed


def moving_average(records, window: int = 6) -> list:
    """Trailing mean of up to ``window`` samples ending at each record.

    Causal along the harvest time sequence; positions and timestamps are
    untouched. The window counts samples, not meters, so pick it to suit
    the field length and logging rate.
    """
    if window < 1:
        raise ConfigError("moving-average window must be positive")
    recs = list(records)
    y = _yields(recs)
    out = []
    csum = np.concatenate([[0.0], np.cumsum(y)])
    for i, r in enumerate(recs):
        lo = max(0, i - window + 1)
        mean = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
        out.append(replace(r, yield_t_ha=float(mean)))
    return out


def clean_pipeline(records, config: CleaningConfig | None = None) -> tuple[list, CleanStats]:
    """Run all cleaning stages in their fixed order and collect stats."""
    cfg = config or CleaningConfig()
    stats = CleanStats(n_input=len(records))
    y0 = _yields(records)
    if len(y0):
        stats.mean_before = float(y0.mean())
        stats.std_before = float(y0.std())

    step = remove_flagged(records)
    stats.n_flagged = stats.n_input - len(step)

    n = len(step)
    step = range_filter(step, cfg.yield_min, cfg.yield_max)
    stats.n_out_of_range = n - len(step)

    n = len(step)
    step = zscore_filter(step, cfg.zscore_limit)
    stats.n_zscore = n - len(step)

    step = sort_by_time(step)
    step, stats.n_imputed = hampel_impute(step, cfg.hampel_window, cfg.hampel_nsigma)
    step = moving_average(step, cfg.ma_window)

    y1 = _yields(step)
    if len(y1):
        stats.mean_after = float(y1.mean())
        stats.std_after = float(y1.std())
    return step, stats

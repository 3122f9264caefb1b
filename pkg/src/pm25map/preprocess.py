"""Station and raster preprocessing: humidity correction, outlier removal,
AOD normalization and merging, windowed extraction, and the QA uncertainty
feature."""

from __future__ import annotations

import csv
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from pm25map.raster import QA_BEST, RasterGrid


class PreprocessError(ValueError):
    pass


# ------------------------------------------------------------ station series

@dataclass
class StationSeries:
    """PM2.5 and RH readings of one station keyed by ISO timestamp."""

    station_id: str
    lat: float
    long: float
    pm: dict = field(default_factory=dict)   # timestamp -> pm25 (ug/m3)
    rh: dict = field(default_factory=dict)   # timestamp -> RH in percent


def read_station_csv(path):
    """Parse the station input CSV into per-station series.

    Columns: station_id, lat, long, timestamp (ISO-8601), pm25, rh_percent.
    Empty pm25/rh fields are treated as missing readings.
    """
    series = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            sid = row["station_id"]
            if sid not in series:
                series[sid] = StationSeries(sid, float(row["lat"]),
                                            float(row["long"]))
            s = series[sid]
            ts = row["timestamp"]
            if row["pm25"] != "":
                s.pm[ts] = float(row["pm25"])
            if row["rh_percent"] != "":
                s.rh[ts] = float(row["rh_percent"])
    return series


def daily_average(series: StationSeries) -> StationSeries:
    """Collapse hourly readings to daily means; days without any valid
    reading stay missing."""
    by_day_pm = defaultdict(list)
    by_day_rh = defaultdict(list)
    for ts, v in series.pm.items():
        if np.isfinite(v):
            by_day_pm[ts[:10]].append(v)
    for ts, v in series.rh.items():
        if np.isfinite(v):
            by_day_rh[ts[:10]].append(v)
    out = StationSeries(series.station_id, series.lat, series.long)
    for day, vals in sorted(by_day_pm.items()):
        out.pm[day] = float(np.mean(vals))
    for day, vals in sorted(by_day_rh.items()):
        out.rh[day] = float(np.mean(vals))
    return out


def correct_pm_humidity(pm: float, rh_percent: float) -> float:
    """Dry-mass correction of a TEOM PM2.5 reading: pm / (1 - rh/100)."""
    if pm < 0:
        raise PreprocessError("negative PM reading")
    if not 0 <= rh_percent < 100:
        raise PreprocessError(f"RH out of range for correction: {rh_percent}")
    return pm / (1.0 - rh_percent / 100.0)


def iqr_filter(values):
    """Keep v iff Q1 - IQR <= v <= Q3 + IQR, quantiles by linear
    interpolation between order statistics.

    Returns (inlier_indices, outlier_indices). Fewer than 4 values pass
    through unfiltered with a warning.
    """
    values = np.asarray(values, dtype=np.float64)
    idx = np.arange(len(values))
    if len(values) < 4:
        warnings.warn("iqr_filter: fewer than 4 values, passing through")
        return idx, np.array([], dtype=int)
    q1 = np.quantile(values, 0.25, method="linear")
    q3 = np.quantile(values, 0.75, method="linear")
    iqr = q3 - q1
    keep = (values >= q1 - iqr) & (values <= q3 + iqr)
    return idx[keep], idx[~keep]


# --------------------------------------------------------------- AOD handling

def normalize_aod_pblh(aod, pblh):
    """Boundary-layer normalization aod / pblh; non-positive PBLH yields
    missing (nan)."""
    if pblh is None or not np.isfinite(pblh) or pblh <= 0:
        return np.nan
    if aod is None or not np.isfinite(aod):
        return np.nan
    return aod / pblh


@dataclass(frozen=True)
class LinearFit:
    """OLS fits in both directions between the two sensors, with R^2."""

    slope_a_to_t: float
    intercept_a_to_t: float
    slope_t_to_a: float
    intercept_t_to_a: float
    r2: float

    def predict_t_from_a(self, a):
        return self.slope_a_to_t * a + self.intercept_a_to_t

    def predict_a_from_t(self, t):
        return self.slope_t_to_a * t + self.intercept_t_to_a


def fit_sensor_regression(pairs) -> LinearFit:
    """Fit aqua<->terra OLS lines from (terra, aqua) value pairs."""
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[0] < 2:
        raise PreprocessError("need at least 2 sensor pairs")
    t, a = pairs[:, 0], pairs[:, 1]
    st, sa = np.std(t), np.std(a)
    if st == 0 and sa == 0:
        raise PreprocessError("both sensors constant, regression degenerate")

    def ols(x, y):
        vx = np.var(x)
        if vx == 0:
            return 0.0, float(np.mean(y))
        slope = np.cov(x, y, bias=True)[0, 1] / vx
        return float(slope), float(np.mean(y) - slope * np.mean(x))

    s_at, i_at = ols(a, t)
    s_ta, i_ta = ols(t, a)
    if st == 0 or sa == 0:
        r2 = 0.0
    else:
        r = np.corrcoef(t, a)[0, 1]
        r2 = float(r * r)
    return LinearFit(s_at, i_at, s_ta, i_ta, r2)


def merge_daily_aod(aod_a, aod_t, fit: LinearFit):
    """Merge two sensor retrievals: mean of the two, filling a missing
    sensor via the fitted cross-sensor regression first."""
    a_ok = aod_a is not None and np.isfinite(aod_a)
    t_ok = aod_t is not None and np.isfinite(aod_t)
    if not a_ok and not t_ok:
        return np.nan
    if a_ok and not t_ok:
        aod_t = fit.predict_t_from_a(aod_a)
    elif t_ok and not a_ok:
        aod_a = fit.predict_a_from_t(aod_t)
    return (aod_a + aod_t) / 2.0


def merge_daily_aod_grid(grid_a: RasterGrid, grid_t: RasterGrid,
                         fit: LinearFit) -> RasterGrid:
    """Cell-wise merge of the two per-sensor daily grids."""
    if not grid_a.same_grid(grid_t):
        raise PreprocessError("sensor grids are not aligned")
    a, t = grid_a.values, grid_t.values
    both = ~grid_a.mask & ~grid_t.mask
    only_a = ~grid_a.mask & grid_t.mask
    only_t = grid_a.mask & ~grid_t.mask
    out = np.full(a.shape, np.nan)
    out[both] = (a[both] + t[both]) / 2.0
    out[only_a] = (a[only_a] + fit.predict_t_from_a(a[only_a])) / 2.0
    out[only_t] = (fit.predict_a_from_t(t[only_t]) + t[only_t]) / 2.0
    return RasterGrid(out, origin=grid_a.origin, cell_size=grid_a.cell_size,
                      band="AOD")


# ---------------------------------------------------------- window extraction

MIN_VALID_CELLS = 3
MAX_WINDOW_STD = 0.5


def window_stats(grid: RasterGrid, row, col):
    """Mean/count/sample-stdev of valid cells in the 3x3 window at (row, col).

    The mean is reported only when the validity (>= 3 valid cells) and
    dispersion (sample stdev < 0.5) gates pass; count and stdev are always
    reported.
    """
    r0, r1 = max(0, row - 1), min(grid.n_rows, row + 2)
    c0, c1 = max(0, col - 1), min(grid.n_cols, col + 2)
    vals = grid.values[r0:r1, c0:c1]
    msk = grid.mask[r0:r1, c0:c1]
    valid = vals[~msk]
    n_valid = int(valid.size)
    if n_valid == 0:
        return np.nan, 0, np.nan
    std = float(np.std(valid, ddof=1)) if n_valid > 1 else 0.0
    if n_valid < MIN_VALID_CELLS or std >= MAX_WINDOW_STD:
        return np.nan, n_valid, std
    return float(np.mean(valid)), n_valid, std


def extract_window(grid: RasterGrid, center):
    """3x3 windowed AOD at the cell containing (lat, long)."""
    row, col = grid.cell_of(*center)
    return window_stats(grid, row, col)


def compute_uncertainty(qa_window) -> float:
    """Fraction of best-quality cells (adjacency ok AND cloud ok) in a 3x3
    QA window of integer class codes."""
    qa = np.asarray(qa_window)
    n = qa.size
    if n == 0:
        return 0.0
    return float(np.sum(qa == QA_BEST)) / n


def uncertainty_at(qa_grid: RasterGrid, row, col) -> float:
    """Uncertainty feature over the 3x3 QA window around a cell; cells
    outside the raster or masked count as non-qualifying, N stays 9."""
    r0, r1 = row - 1, row + 2
    c0, c1 = col - 1, col + 2
    n_best = 0
    for r in range(r0, r1):
        for c in range(c0, c1):
            if 0 <= r < qa_grid.n_rows and 0 <= c < qa_grid.n_cols:
                if not qa_grid.mask[r, c] and qa_grid.values[r, c] == QA_BEST:
                    n_best += 1
    return n_best / 9.0


def strict_qa_mask(aod_grid: RasterGrid, qa_grid: RasterGrid) -> RasterGrid:
    """Optional hard QA filter: mask AOD cells whose QA class is not best
    quality in both masks."""
    if not aod_grid.same_grid(qa_grid):
        raise PreprocessError("QA grid not aligned with AOD grid")
    bad = qa_grid.mask | (qa_grid.values != QA_BEST)
    vals = np.where(bad, np.nan, aod_grid.values)
    return RasterGrid(vals, origin=aod_grid.origin,
                      cell_size=aod_grid.cell_size, band=aod_grid.band)

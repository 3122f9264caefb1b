"""Synthetic data generation: a tabular benchmark with a documented
nonlinear target, and a small raster/station world exercising every file
format the pipeline ingests.

The target closed form (shared by both generators):

    pm = 6 + 55*AOD + 35*AOD*RH + 0.012*(1500 - PBLH)
         + 8*sin(2*pi*DOY/365 + 0.7) + 0.03*(T - 289)**2
         + 4*U + 1.5*WS

AOD*RH is a pure interaction and the DOY/T terms are smooth nonlinearities,
so a linear fit leaves a sizeable residual that tree ensembles recover.
"""

from __future__ import annotations

import csv
import os

import numpy as np
from scipy.ndimage import gaussian_filter

from pm25map.data import FEATURE_NAMES, Dataset, FeatureSchema
from pm25map.preprocess import uncertainty_at, window_stats
from pm25map.raster import QA_BEST, RasterGrid, band_path

MET_BANDS = ("T", "DT", "PBLH", "SP", "LAI", "WS", "WD", "UV", "RH")

# iid microscale noise added to AOD fields; drives the 3x3 window std gate
AOD_MICRO_SIGMA = 0.12


def target_function(X):
    """Noiseless PM2.5 for feature rows in canonical schema order."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    f = {name: X[:, i] for i, name in enumerate(FEATURE_NAMES)}
    return (6.0
            + 55.0 * f["AOD"]
            + 35.0 * f["AOD"] * f["RH"]
            + 0.012 * (1500.0 - f["PBLH"])
            + 8.0 * np.sin(2.0 * np.pi * f["DOY"] / 365.0 + 0.7)
            + 0.03 * (f["T"] - 289.0) ** 2
            + 4.0 * f["U"]
            + 1.5 * f["WS"])


def sample_features(n, rng):
    """Draw feature rows with marginals roughly matching the study area."""
    cols = {
        "AOD": np.clip(rng.lognormal(np.log(0.15), 0.45, n), 0.01, 0.9),
        "U": rng.integers(0, 10, n) / 9.0,
        "Lat": rng.uniform(35.60, 35.80, n),
        "Long": rng.uniform(51.24, 51.51, n),
        "T": rng.normal(289.5, 10.5, n),
        "DT": rng.normal(271.9, 5.2, n),
        "PBLH": rng.uniform(28.0, 1982.0, n),
        "SP": rng.uniform(1.30, 2.33, n),
        "LAI": rng.uniform(0.47, 0.53, n),
        "WS": np.clip(rng.normal(1.8, 0.5, n), 0.1, None),
        "WD": rng.uniform(-2.31, 2.44, n),
        "UV": rng.uniform(33686.0, 139512.0, n),
        "RH": rng.uniform(0.41, 0.94, n),
        "DOY": rng.integers(1, 366, n).astype(np.float64),
    }
    return np.column_stack([cols[name] for name in FEATURE_NAMES])


def make_benchmark(n=20000, seed=42, noise_scale=5.0):
    """Standard synthetic tabular benchmark.

    noise_scale is tuned so a multivariate linear fit lands at a held-out
    R^2 of roughly 0.55-0.60. Returns (Dataset, noiseless_target).
    """
    rng = np.random.default_rng(seed)
    X = sample_features(n, rng)
    clean = target_function(X)
    y = clean + rng.normal(0.0, noise_scale, n)
    return Dataset(X, y, schema=FeatureSchema()), clean


# --------------------------------------------------------------- raster world

def _smooth_field(shape, rng, lo, hi, sigma=3.0):
    base = gaussian_filter(rng.standard_normal(shape), sigma)
    base = (base - base.min()) / max(base.max() - base.min(), 1e-12)
    return lo + base * (hi - lo)


def generate_world(out_dir, seed=0, n_rows=24, n_cols=24, n_stations=8,
                   n_days=8, start_date="2018-01-01", noise_scale=2.0,
                   aod_missing_frac=0.15, aod_micro_sigma=AOD_MICRO_SIGMA):
    """Write station CSV, per-day rasters for every band, and the
    ground-truth (noiseless) dataset.

    Station PM readings are emitted as three hourly values per day whose
    mean, after humidity correction, matches the noisy target, so the
    prepare chain reproduces it.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    raster_dir = os.path.join(out_dir, "rasters")
    os.makedirs(raster_dir, exist_ok=True)

    origin = (35.80, 51.24)
    cell = 0.01
    shape = (n_rows, n_cols)

    lat_min = origin[0] - (n_rows - 1) * cell
    long_max = origin[1] + (n_cols - 1) * cell
    st_lat = rng.uniform(lat_min + cell, origin[0] - cell, n_stations)
    st_long = rng.uniform(origin[1] + cell, long_max - cell, n_stations)
    st_ids = [f"S{i:02d}" for i in range(n_stations)]

    dates = [_offset_date(start_date, i) for i in range(n_days)]

    station_rows = []
    truth_rows = []

    for day_no, date in enumerate(dates):
        doy = _day_of_year(date)
        aod_base = _smooth_field(shape, rng, 0.05, 0.55, sigma=4.0)
        aod_a = aod_base + rng.normal(0.0, aod_micro_sigma, shape)
        # second sensor sees a linearly related field plus its own noise
        aod_t = 0.9 * aod_base + 0.02 + rng.normal(0.0, aod_micro_sigma, shape)
        for grid in (aod_a, aod_t):
            miss = rng.random(shape) < aod_missing_frac
            grid[miss] = np.nan
        np.clip(aod_a, 0.0, None, out=aod_a)
        np.clip(aod_t, 0.0, None, out=aod_t)

        qa = np.where(rng.random(shape) < 0.8, QA_BEST,
                      rng.integers(1, 4, shape))

        met = {
            "T": _smooth_field(shape, rng, 275.0, 300.0),
            "DT": _smooth_field(shape, rng, 255.0, 285.0),
            "PBLH": _smooth_field(shape, rng, 100.0, 1900.0),
            "SP": _smooth_field(shape, rng, 1.30, 2.33),
            "LAI": _smooth_field(shape, rng, 0.47, 0.53),
            "WS": _smooth_field(shape, rng, 0.7, 4.9),
            "WD": _smooth_field(shape, rng, -2.31, 2.44),
            "UV": _smooth_field(shape, rng, 33686.0, 139512.0),
            "RH": _smooth_field(shape, rng, 0.41, 0.94),
        }

        grids = {"AOD_A": aod_a, "AOD_T": aod_t, "QA": qa.astype(np.float64)}
        grids.update(met)
        for band, vals in grids.items():
            RasterGrid(vals, origin=origin, cell_size=cell,
                       band=band).write_ascii(
                band_path(raster_dir, band, date))

        # station-side truth from the same fields
        import warnings as _warnings
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", RuntimeWarning)
            merged = np.nanmean(np.stack([aod_a, (aod_t - 0.02) / 0.9]),
                                axis=0)
        aod_grid = RasterGrid(merged, origin=origin, cell_size=cell)
        qa_grid = RasterGrid(qa.astype(np.float64), origin=origin,
                             cell_size=cell)
        for s in range(n_stations):
            row, col = aod_grid.cell_of(st_lat[s], st_long[s])
            aod_val, _, _ = window_stats(aod_grid, row, col)
            u_val = uncertainty_at(qa_grid, row, col)
            feats = {
                "AOD": aod_val if np.isfinite(aod_val) else 0.2,
                "U": u_val,
                "Lat": st_lat[s], "Long": st_long[s],
                "DOY": float(doy),
            }
            for band in MET_BANDS:
                feats[band] = float(met[band][row, col])
            x = np.array([[feats[nm] for nm in FEATURE_NAMES]])
            pm_clean = float(target_function(x)[0])
            pm_noisy = max(pm_clean + rng.normal(0.0, noise_scale), 0.5)
            rh_station = rng.uniform(20.0, 70.0)
            # stations report wet mass: invert the humidity correction
            pm_wet = pm_noisy * (1.0 - rh_station / 100.0)
            for hour in (9, 12, 15):
                station_rows.append(
                    (st_ids[s], st_lat[s], st_long[s],
                     f"{date}T{hour:02d}:00:00", pm_wet, rh_station))
            truth_rows.append((st_ids[s], date, pm_clean, pm_noisy))

    station_csv = os.path.join(out_dir, "stations.csv")
    with open(station_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "lat", "long", "timestamp", "pm25",
                    "rh_percent"])
        for r in station_rows:
            w.writerow([r[0], repr(float(r[1])), repr(float(r[2])), r[3],
                        repr(float(r[4])), repr(float(r[5]))])

    truth_csv = os.path.join(out_dir, "truth.csv")
    with open(truth_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "date", "pm25_clean", "pm25_noisy"])
        for r in truth_rows:
            w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3]))])

    return {"stations": station_csv, "rasters": raster_dir,
            "truth": truth_csv, "dates": dates}


def _offset_date(start, days):
    import datetime as dt
    d = dt.date.fromisoformat(start) + dt.timedelta(days=days)
    return d.isoformat()


def _day_of_year(date):
    import datetime as dt
    return dt.date.fromisoformat(date).timetuple().tm_yday

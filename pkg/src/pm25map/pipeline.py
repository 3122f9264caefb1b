"""Config-driven orchestration: preparation of the tabular dataset from
station and raster inputs, model training and evaluation, daily and annual
map production, and AQI categorization."""

from __future__ import annotations

import csv as _csv
import datetime as dt
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from pm25map import metrics as me
from pm25map import modelio
from pm25map.cascade import CascadeConfig, CascadeModel
from pm25map.data import (
    FEATURE_NAMES, DataError, Dataset, MinMaxScaler,
    split_train_test,
)
from pm25map.kriging import kriging_grid_search, krige_predict
from pm25map.preprocess import (
    MIN_VALID_CELLS, MAX_WINDOW_STD, PreprocessError, correct_pm_humidity,
    daily_average, fit_sensor_regression, iqr_filter, merge_daily_aod_grid,
    read_station_csv, strict_qa_mask, uncertainty_at, window_stats,
    LinearFit,
)
from pm25map.raster import QA_BEST, RasterError, RasterGrid, band_path
from pm25map.synth import MET_BANDS, generate_world
from pm25map.trees import ForestEstimator, TreeConfig

# ------------------------------------------------------------------- config


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    stations: str
    raster_dir: str
    output_dir: str
    dates: list
    naod: bool = False
    strict_qa: bool = False
    family: str = "cascade"
    params: dict = None
    grid: dict = None
    train_fraction: float = 0.7
    seed: int = 0
    cv_folds: int = 5
    n_jobs: int = 1
    kriging_subsample: int = 300

    @classmethod
    def load(cls, path, overrides=None):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if overrides:
            raw.update(overrides)
        base = os.path.dirname(os.path.abspath(path))

        def rel(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        try:
            dates = raw["dates"]
            if isinstance(dates, dict):
                start = dt.date.fromisoformat(dates["start"])
                end = dt.date.fromisoformat(dates["end"])
                if end < start:
                    raise ConfigError("empty date range")
                dates = [(start + dt.timedelta(days=i)).isoformat()
                         for i in range((end - start).days + 1)]
            model = raw.get("model", {})
            return cls(
                stations=rel(raw["stations"]),
                raster_dir=rel(raw["raster_dir"]),
                output_dir=rel(raw.get("output_dir", "out")),
                dates=dates,
                naod=bool(raw.get("naod", False)),
                strict_qa=bool(raw.get("strict_qa", False)),
                family=model.get("family", "cascade"),
                params=model.get("params") or {},
                grid=model.get("grid"),
                train_fraction=float(raw.get("train_fraction", 0.7)),
                seed=int(raw.get("seed", 0)),
                cv_folds=int(raw.get("cv_folds", 5)),
                n_jobs=int(raw.get("n_jobs", 1)),
                kriging_subsample=int(raw.get("kriging_subsample", 300)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from exc


class RunLog:
    """Line-delimited structured log with deterministic ordering."""

    def __init__(self, path=None):
        self.path = path
        self.records = []

    def add(self, **record):
        self.records.append(record)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def __call__(self, message):
        self.add(message=message)


# ---------------------------------------------------------------------- AQI

@dataclass(frozen=True)
class AQICategory:
    label: str
    pm_low: float
    pm_high: float
    index_low: int
    index_high: int
    out_of_table: bool = False


AQI_TABLE = (
    AQICategory("Good", 0.0, 12.0, 0, 50),
    AQICategory("Moderate", 12.1, 35.4, 51, 100),
    AQICategory("Unhealthy for Sensitive Groups", 35.5, 55.4, 101, 150),
    AQICategory("Unhealthy", 55.5, 150.4, 151, 200),
    AQICategory("Very Unhealthy", 150.5, 250.4, 201, 300),
    AQICategory("Hazardous", 250.5, 500.4, 301, 500),
)


def classify_aqi(pm25: float) -> AQICategory:
    """Category per the published PM2.5 breakpoints; the table has 0.1-wide
    gaps between bands, so values are rounded to one decimal first."""
    if pm25 < 0 or not np.isfinite(pm25):
        raise DataError(f"invalid PM2.5 value {pm25}")
    v = round(float(pm25), 1)
    for cat in AQI_TABLE:
        if cat.pm_low <= v <= cat.pm_high:
            return cat
    last = AQI_TABLE[-1]
    return AQICategory(last.label, last.pm_low, last.pm_high,
                       last.index_low, last.index_high, out_of_table=True)


# ------------------------------------------------------------------ prepare

def _load_band(cfg, band, date, required=True):
    path = band_path(cfg.raster_dir, band, date)
    if not os.path.exists(path):
        if required:
            raise RasterError(f"missing raster {path}")
        return None
    return RasterGrid.read_ascii(path, band=band)


def _subsample_points(points, cap, seed=0):
    """Deterministic thinning: evenly strided rows of the point array."""
    n = len(points)
    if n <= cap:
        return points
    idx = np.linspace(0, n - 1, cap).astype(int)
    return points[idx]


def _krige_met_at(cfg, grid: RasterGrid, targets, log, band):
    """Interpolate a meteorological raster to target (lat, long) points by
    ordinary kriging of its valid cell centers."""
    lats, longs = grid.cell_centers()
    ok = ~grid.mask
    pts = np.column_stack([longs[ok], lats[ok], grid.values[ok]])
    if len(pts) == 0:
        return np.full(len(targets), np.nan)
    if np.ptp(pts[:, 2]) == 0:
        return np.full(len(targets), pts[0, 2])
    pts = _subsample_points(pts, cfg.kriging_subsample)
    kind, vm, cv = kriging_grid_search(pts, cv_folds=min(5, len(pts)),
                                       seed=cfg.seed)
    log.add(stage="kriging_fit", band=band, kind=kind, nugget=vm.nugget,
            psill=vm.psill, range=vm.range_,
            cv_rmse={k: v for k, v in cv.items()})
    tg = np.column_stack([np.asarray(targets)[:, 1],
                          np.asarray(targets)[:, 0]])  # (long, lat)
    return krige_predict(pts, vm, tg)[:, 0]


def prepare(cfg: PipelineConfig) -> Dataset:
    """Full preprocessing chain producing the tabular dataset and a log
    accounting for every dropped station-day."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    log = RunLog(os.path.join(cfg.output_dir, "prepare_log.jsonl"))
    if log.path and os.path.exists(log.path):
        os.remove(log.path)

    series = read_station_csv(cfg.stations)
    daily = {sid: daily_average(s) for sid, s in series.items()}

    # humidity correction, then per-station IQR outlier removal
    corrected = {}
    drops = {"rh_invalid": 0, "iqr_outlier": 0, "aod_window": 0,
             "met_missing": 0}
    rows_in = 0
    for sid, s in daily.items():
        days, vals = [], []
        for day in sorted(s.pm):
            if day not in cfg.dates:
                continue
            rows_in += 1
            rh = s.rh.get(day)
            if rh is None or not 0 <= rh < 100:
                drops["rh_invalid"] += 1
                continue
            days.append(day)
            vals.append(correct_pm_humidity(s.pm[day], rh))
        if not days:
            corrected[sid] = {}
            continue
        if len(vals) >= 4:
            inl, outl = iqr_filter(vals)
            drops["iqr_outlier"] += len(outl)
            corrected[sid] = {days[i]: vals[i] for i in inl}
        else:
            corrected[sid] = dict(zip(days, vals))

    # inter-sensor regression from all co-valid pixels in the date range
    pairs = []
    day_grids = {}
    for date in cfg.dates:
        ga = _load_band(cfg, "AOD_A", date, required=False)
        gt = _load_band(cfg, "AOD_T", date, required=False)
        qa = _load_band(cfg, "QA", date, required=False)
        if ga is None or gt is None:
            continue
        if cfg.strict_qa and qa is not None:
            ga = strict_qa_mask(ga, qa)
            gt = strict_qa_mask(gt, qa)
        day_grids[date] = (ga, gt, qa)
        both = ~ga.mask & ~gt.mask
        pairs.append(np.column_stack([gt.values[both], ga.values[both]]))
    pairs = np.vstack(pairs) if pairs else np.empty((0, 2))
    try:
        fit = fit_sensor_regression(pairs)
    except PreprocessError as exc:
        log.add(stage="sensor_regression", warning=str(exc),
                fallback="identity")
        fit = LinearFit(1.0, 0.0, 1.0, 0.0, 0.0)
    log.add(stage="sensor_regression", n_pairs=len(pairs), r2=fit.r2,
            slope_a_to_t=fit.slope_a_to_t, intercept_a_to_t=fit.intercept_a_to_t)

    # assemble rows
    X_rows, y_rows, sids, dates_out = [], [], [], []
    station_list = sorted(corrected)
    for date in cfg.dates:
        if date not in day_grids:
            n_pm = sum(date in corrected[sid] for sid in station_list)
            drops["aod_window"] += n_pm
            continue
        ga, gt, qa = day_grids[date]
        merged = merge_daily_aod_grid(ga, gt, fit)
        doy = dt.date.fromisoformat(date).timetuple().tm_yday

        cand = []
        for sid in station_list:
            if date not in corrected[sid]:
                continue
            st = daily[sid]
            try:
                row, col = merged.cell_of(st.lat, st.long)
            except RasterError:
                drops["aod_window"] += 1
                continue
            aod, n_valid, stdev = window_stats(merged, row, col)
            if not np.isfinite(aod):
                drops["aod_window"] += 1
                log.add(stage="aod_window", station=sid, date=date,
                        n_valid=n_valid,
                        stdev=None if stdev is None or not np.isfinite(stdev)
                        else stdev)
                continue
            u = uncertainty_at(qa, row, col) if qa is not None else 0.0
            cand.append((sid, st, aod, u))
        if not cand:
            continue

        targets = np.array([[c[1].lat, c[1].long] for c in cand])
        met_vals = {}
        met_ok = np.ones(len(cand), dtype=bool)
        for band in MET_BANDS:
            grid = _load_band(cfg, band, date, required=False)
            if grid is None:
                met_vals[band] = np.full(len(cand), np.nan)
                met_ok[:] = False
                continue
            met_vals[band] = _krige_met_at(cfg, grid, targets, log, band)
            met_ok &= np.isfinite(met_vals[band])

        for i, (sid, st, aod, u) in enumerate(cand):
            if not met_ok[i]:
                drops["met_missing"] += 1
                continue
            feats = {"AOD": aod, "U": u, "Lat": st.lat, "Long": st.long,
                     "DOY": float(doy)}
            for band in MET_BANDS:
                feats[band] = float(met_vals[band][i])
            if cfg.naod:
                pblh = feats["PBLH"]
                if pblh <= 0:
                    drops["met_missing"] += 1
                    continue
                feats["AOD"] = feats["AOD"] / pblh
            X_rows.append([feats[nm] for nm in FEATURE_NAMES])
            y_rows.append(corrected[sid][date])
            sids.append(sid)
            dates_out.append(date)

    ds = Dataset(np.array(X_rows).reshape(-1, len(FEATURE_NAMES)),
                 np.array(y_rows), station_ids=sids, dates=dates_out)
    rows_out = len(ds)
    accounted = rows_out + sum(drops.values())
    log.add(stage="summary", rows_in=rows_in, rows_out=rows_out,
            drops=drops, accounted=accounted)
    if accounted != rows_in:
        raise PreprocessError(
            f"drop accounting mismatch: {rows_in} in, {accounted} accounted")
    if rows_out == 0:
        raise PreprocessError("prepare produced an empty dataset")
    ds.to_csv(os.path.join(cfg.output_dir, "dataset.csv"))
    return ds


# ----------------------------------------------------------------- training

def _model_factory(family, seed, n_jobs):
    def make(params):
        p = dict(params)
        if family == "linear":
            return _LinearAdapter()
        if family in ("rf", "et"):
            kind = ("random_forest" if family == "rf" else "extra_trees")
            return _ForestAdapter(kind, p, seed, n_jobs)
        if family == "cascade":
            return _CascadeAdapter(p, seed, n_jobs)
        raise ConfigError(f"unknown model family {family!r}")
    return make


class _LinearAdapter:
    def fit(self, X, y):
        self.model = me.fit_linear(X, y)

    def predict(self, X):
        return self.model.predict(X)


class _ForestAdapter:
    def __init__(self, kind, params, seed, n_jobs):
        self.kind = kind
        self.params = params
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, y):
        p = self.params
        cfg = TreeConfig(
            max_depth=p.get("max_depth"),
            min_samples_leaf=p.get("min_samples_leaf", 1),
            max_features=p.get("max_features",
                               0.5 if self.kind == "random_forest" else 0.8),
            split_mode=("best_of_subset" if self.kind == "random_forest"
                        else "random_threshold"),
        )
        self.model = ForestEstimator.fit(
            X, y, self.kind, p.get("n_trees", 500), cfg,
            seed=self.seed, n_jobs=self.n_jobs)

    def predict(self, X):
        return self.model.predict(X)


class _CascadeAdapter:
    def __init__(self, params, seed, n_jobs):
        self.params = params
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, y):
        p = self.params
        tree_cfg = TreeConfig(
            max_depth=p.get("max_depth"),
            min_samples_leaf=p.get("min_samples_leaf", 1),
            max_features=p.get("max_features", "sqrt"),
        )
        cfg = CascadeConfig(
            n_layers=p.get("n_layers", 2),
            trees_per_estimator=p.get("trees_per_estimator", 2000),
            tree_config=tree_cfg,
            augmentation_mode=p.get("augmentation_mode", "out_of_fold"),
            cv_folds_for_augmentation=p.get("cv_folds", 5),
            seed=self.seed,
        )
        self.model = CascadeModel.fit(X, y, cfg, n_jobs=self.n_jobs)

    def predict(self, X):
        return self.model.predict(X)


_FAMILY_TO_BUNDLE = {"linear": modelio.FAMILY_LINEAR, "rf": modelio.FAMILY_RF,
                     "et": modelio.FAMILY_ET,
                     "cascade": modelio.FAMILY_CASCADE}


def train(cfg: PipelineConfig, dataset: Dataset):
    """Scale, grid search, fit the winning configuration on the full
    training split, and serialize the model bundle."""
    if len(dataset) < 10 * cfg.cv_folds:
        raise DataError(f"need at least {10 * cfg.cv_folds} rows to train")
    os.makedirs(cfg.output_dir, exist_ok=True)
    log = RunLog(os.path.join(cfg.output_dir, "train_log.jsonl"))

    train_ds, test_ds = split_train_test(dataset, cfg.train_fraction,
                                         cfg.seed)
    train_ds.to_csv(os.path.join(cfg.output_dir, "dataset_train.csv"))
    test_ds.to_csv(os.path.join(cfg.output_dir, "dataset_test.csv"))

    scaler = MinMaxScaler.fit(train_ds, include_target=True)
    Xs = scaler.transform_X(train_ds.X)
    ys = scaler.transform_target(train_ds.y)

    axes = cfg.grid or {k: [v] for k, v in (cfg.params or {}).items()}
    if not axes:
        axes = {"default": [True]}
    grid = me.GridSpec(axes=axes, folds=cfg.cv_folds)
    factory = _model_factory(cfg.family, cfg.seed, cfg.n_jobs)

    def adapt(cell):
        cell = {k: v for k, v in cell.items() if k != "default"}
        return factory(cell)

    best, cv_table = me.grid_search(Xs, ys, adapt, grid, cfg.seed, log=log)
    me.write_cv_table(cv_table, os.path.join(cfg.output_dir, "cv_table.csv"))
    log.add(stage="grid_search", best=best)

    winner = adapt(best)
    winner.fit(Xs, ys)
    bundle = modelio.ModelBundle(_FAMILY_TO_BUNDLE[cfg.family],
                                 winner.model, scaler, dataset.schema)
    model_path = os.path.join(cfg.output_dir, "model.npz")
    modelio.save_bundle(bundle, model_path)
    return model_path, best, cv_table


# --------------------------------------------------------------- evaluation

def evaluate(model_path, dataset: Dataset, output_dir):
    """Metrics on the original ug/m3 scale, per-station breakdown, and the
    prediction-vs-actual series export."""
    bundle = modelio.load_bundle(model_path)
    if tuple(bundle.schema.names) != tuple(dataset.schema.names):
        raise DataError("model schema does not match dataset schema")
    os.makedirs(output_dir, exist_ok=True)
    pred = bundle.predict(dataset.X)
    rep = me.compute_metrics(dataset.y, pred)

    with open(os.path.join(output_dir, "metrics.csv"), "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["metric", "value"])
        for k, v in rep.rows():
            w.writerow([k, "" if v is None else repr(float(v))])
    with open(os.path.join(output_dir, "metrics.txt"), "w") as fh:
        fh.write(str(rep) + "\n")

    with open(os.path.join(output_dir, "predictions.csv"), "w",
              newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["station_id", "date", "actual", "predicted"])
        for i in range(len(dataset)):
            w.writerow([
                dataset.station_ids[i] if dataset.station_ids else "",
                dataset.dates[i] if dataset.dates else "",
                repr(float(dataset.y[i])), repr(float(pred[i]))])

    if dataset.station_ids:
        with open(os.path.join(output_dir, "metrics_by_station.csv"), "w",
                  newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["station_id", "n", "rmse", "mae", "r2", "ape"])
            for sid in sorted(set(dataset.station_ids)):
                idx = [i for i, s in enumerate(dataset.station_ids)
                       if s == sid]
                if len(idx) < 2:
                    continue
                r = me.compute_metrics(dataset.y[idx], pred[idx])
                w.writerow([sid, r.n, repr(r.rmse), repr(r.mae),
                            "" if r.r2 is None else repr(r.r2),
                            "" if r.ape is None else repr(r.ape)])
    return rep


# ----------------------------------------------------------- map production

def _window_feature_grids(grid: RasterGrid):
    """Vectorized 3x3 window mean/count/stdev for every cell, with the
    validity and dispersion gates applied to the mean."""
    vals = np.pad(grid.values, 1, constant_values=np.nan)
    vals[np.pad(grid.mask, 1, constant_values=True)] = np.nan
    win = np.lib.stride_tricks.sliding_window_view(vals, (3, 3))
    win = win.reshape(grid.n_rows, grid.n_cols, 9)
    cnt = np.sum(np.isfinite(win), axis=2)
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(np.where(np.isfinite(win), win, np.nan), axis=2)
        std = np.nanstd(win, axis=2, ddof=1)
    std = np.where(cnt > 1, std, 0.0)
    gate = (cnt >= MIN_VALID_CELLS) & (std < MAX_WINDOW_STD)
    return np.where(gate, mean, np.nan), cnt, std


def _uncertainty_grid(qa: RasterGrid):
    best = np.pad((~qa.mask) & (qa.values == QA_BEST), 1,
                  constant_values=False).astype(np.float64)
    win = np.lib.stride_tricks.sliding_window_view(best, (3, 3))
    return win.reshape(qa.n_rows, qa.n_cols, 9).sum(axis=2) / 9.0


def predict_map(model_path, cfg: PipelineConfig, date, fill_missing=True):
    """Predict a PM2.5 raster for one date, kriging-fill the gaps, and
    render the AQI-classed image. Returns the filled RasterGrid."""
    bundle = modelio.load_bundle(model_path)
    os.makedirs(cfg.output_dir, exist_ok=True)
    log = RunLog(os.path.join(cfg.output_dir, f"predict_log_{date}.jsonl"))

    ga = _load_band(cfg, "AOD_A", date)
    gt = _load_band(cfg, "AOD_T", date)
    qa = _load_band(cfg, "QA", date, required=False)
    if cfg.strict_qa and qa is not None:
        ga = strict_qa_mask(ga, qa)
        gt = strict_qa_mask(gt, qa)
    both = ~ga.mask & ~gt.mask
    try:
        fit = fit_sensor_regression(
            np.column_stack([gt.values[both], ga.values[both]]))
    except PreprocessError:
        fit = LinearFit(1.0, 0.0, 1.0, 0.0, 0.0)
    merged = merge_daily_aod_grid(ga, gt, fit)

    aod, cnt, std = _window_feature_grids(merged)
    u = (_uncertainty_grid(qa) if qa is not None
         else np.zeros_like(aod))
    lats, longs = merged.cell_centers()
    doy = dt.date.fromisoformat(date).timetuple().tm_yday

    feats = {"AOD": aod, "U": u, "Lat": lats, "Long": longs,
             "DOY": np.full_like(aod, float(doy))}
    for band in MET_BANDS:
        grid = _load_band(cfg, band, date)
        if not grid.same_grid(merged):
            raise RasterError(f"{band} raster not aligned with AOD grid")
        feats[band] = np.where(grid.mask, np.nan, grid.values)
    if cfg.naod:
        with np.errstate(divide="ignore", invalid="ignore"):
            feats["AOD"] = np.where(feats["PBLH"] > 0,
                                    feats["AOD"] / feats["PBLH"], np.nan)

    stack = np.stack([feats[nm] for nm in FEATURE_NAMES], axis=-1)
    complete = np.all(np.isfinite(stack), axis=-1)
    pm = np.full(aod.shape, np.nan)
    if np.any(complete):
        pm[complete] = bundle.predict(stack[complete])

    n_predicted = int(np.sum(complete))
    n_missing = int(pm.size - n_predicted)
    log.add(stage="predict", date=date, cells=int(pm.size),
            predicted=n_predicted, missing=n_missing)

    if fill_missing and n_missing and n_predicted >= 2:
        pts = np.column_stack([longs[complete], lats[complete],
                               pm[complete]])
        pts = _subsample_points(pts, cfg.kriging_subsample, cfg.seed)
        if np.ptp(pts[:, 2]) == 0:
            pm[~complete] = pts[0, 2]
            log.add(stage="kriging_fill", date=date, constant=True)
        else:
            kind, vm, cv = kriging_grid_search(
                pts, cv_folds=min(5, len(pts)), seed=cfg.seed)
            log.add(stage="kriging_fill", date=date, kind=kind,
                    nugget=vm.nugget, psill=vm.psill, range=vm.range_,
                    cv_rmse=cv)
            holes = ~complete
            tg = np.column_stack([longs[holes], lats[holes]])
            pm[holes] = krige_predict(pts, vm, tg)[:, 0]

    out = RasterGrid(pm, origin=merged.origin, cell_size=merged.cell_size,
                     band="PM25")
    out.write_ascii(os.path.join(cfg.output_dir, f"PM25_{date}.asc"))
    render_aqi_image(out, os.path.join(cfg.output_dir, f"PM25_{date}.ppm"))
    return out


def annual_map(daily_grids):
    """Per-cell mean over unmasked days; a cell stays masked only if it is
    masked on every day."""
    if not daily_grids:
        raise RasterError("need at least one daily raster")
    first = daily_grids[0]
    for g in daily_grids[1:]:
        if not g.same_grid(first):
            raise RasterError("daily rasters are not aligned")
    stack = np.stack([np.where(g.mask, np.nan, g.values)
                      for g in daily_grids])
    # cells masked on every day legitimately produce all-NaN slices
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
    return RasterGrid(mean, origin=first.origin, cell_size=first.cell_size,
                      band="PM25_annual")


# ---------------------------------------------------------------- rendering

# fixed 6-class ramp keyed to the AQI categories, so maps are comparable
AQI_COLORS = {
    "Good": (0, 228, 0),
    "Moderate": (255, 255, 0),
    "Unhealthy for Sensitive Groups": (255, 126, 0),
    "Unhealthy": (255, 0, 0),
    "Very Unhealthy": (143, 63, 151),
    "Hazardous": (126, 0, 35),
}
MISSING_COLOR = (190, 190, 190)


def render_aqi_image(grid: RasterGrid, path):
    """Binary PPM image with one pixel per cell, AQI class colors."""
    img = np.empty((grid.n_rows, grid.n_cols, 3), dtype=np.uint8)
    for r in range(grid.n_rows):
        for c in range(grid.n_cols):
            if grid.mask[r, c] or not np.isfinite(grid.values[r, c]):
                img[r, c] = MISSING_COLOR
            else:
                v = max(grid.values[r, c], 0.0)
                img[r, c] = AQI_COLORS[classify_aqi(v).label]
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"P6\n{grid.n_cols} {grid.n_rows}\n255\n".encode())
        fh.write(img.tobytes())
    os.replace(tmp, path)


# ------------------------------------------------------------------- synth

def synth(out_dir, seed, **kwargs):
    """Generate the synthetic raster/station world plus a ready-to-use
    pipeline config file."""
    info = generate_world(out_dir, seed=seed, **kwargs)
    config = {
        "stations": "stations.csv",
        "raster_dir": "rasters",
        "output_dir": "out",
        "dates": info["dates"],
        "seed": seed,
        "model": {"family": "rf", "params": {"n_trees": 30}},
    }
    cfg_path = os.path.join(out_dir, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
    info["config"] = cfg_path
    return info

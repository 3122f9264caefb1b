"""Feature schema, tabular dataset container, min-max scaling and splitting.

Everything downstream (preprocessing, model fitting, map prediction) talks to
the same 14-feature schema defined here. Datasets are immutable snapshots of a
feature matrix plus an optional PM2.5 target column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# Canonical model inputs, in canonical order.
FEATURE_NAMES = (
    "AOD", "U", "Lat", "Long", "T", "DT", "PBLH",
    "SP", "LAI", "WS", "WD", "UV", "RH", "DOY",
)

FEATURE_UNITS = {
    "AOD": "unitless",
    "U": "fraction",
    "Lat": "deg",
    "Long": "deg",
    "T": "K",
    "DT": "K",
    "PBLH": "m",
    "SP": "unitless",
    "LAI": "unitless",
    "WS": "m/s",
    "WD": "rad",
    "UV": "J/m2",
    "RH": "percent",
    "DOY": "day",
}

TARGET_NAME = "PM25"


class DataError(ValueError):
    """Raised on malformed or inconsistent tabular inputs."""


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names with display units."""

    names: tuple = FEATURE_NAMES
    units: dict = field(default_factory=lambda: dict(FEATURE_UNITS))

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)


class Dataset:
    """Feature matrix with optional target, station ids and dates.

    Rows admitted to training must be finite; construction checks shape
    consistency only, finiteness is enforced by ``require_finite``.
    """

    def __init__(self, X, y=None, schema=None, station_ids=None, dates=None):
        self.schema = schema if schema is not None else FeatureSchema()
        self.X = np.asarray(X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError("X must be 2-D")
        if self.X.shape[1] != len(self.schema):
            raise DataError(
                f"expected {len(self.schema)} feature columns, got {self.X.shape[1]}"
            )
        self.y = None if y is None else np.asarray(y, dtype=np.float64)
        if self.y is not None and self.y.shape != (self.X.shape[0],):
            raise DataError("y length does not match X")
        self.station_ids = list(station_ids) if station_ids is not None else None
        self.dates = list(dates) if dates is not None else None
        for aux in (self.station_ids, self.dates):
            if aux is not None and len(aux) != self.X.shape[0]:
                raise DataError("auxiliary column length does not match X")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def require_finite(self):
        if not np.all(np.isfinite(self.X)):
            raise DataError("non-finite feature values")
        if self.y is not None and not np.all(np.isfinite(self.y)):
            raise DataError("non-finite target values")
        return self

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(
            self.X[idx],
            None if self.y is None else self.y[idx],
            schema=self.schema,
            station_ids=None if self.station_ids is None
            else [self.station_ids[i] for i in idx],
            dates=None if self.dates is None else [self.dates[i] for i in idx],
        )

    # ------------------------------------------------------------------ CSV

    def to_csv(self, path):
        """Write the dataset; header = schema names + PM25 (+ station_id, date)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = list(self.schema.names) + [TARGET_NAME]
            if self.station_ids is not None:
                header.append("station_id")
            if self.dates is not None:
                header.append("date")
            w.writerow(header)
            for i in range(len(self)):
                row = [_fmt(v) for v in self.X[i]]
                row.append("" if self.y is None or not np.isfinite(self.y[i])
                           else _fmt(self.y[i]))
                if self.station_ids is not None:
                    row.append(self.station_ids[i])
                if self.dates is not None:
                    row.append(self.dates[i])
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, schema=None):
        schema = schema if schema is not None else FeatureSchema()
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            expected = list(schema.names) + [TARGET_NAME]
            if header[: len(expected)] != expected:
                raise DataError(f"unexpected CSV header in {path}")
            has_station = "station_id" in header
            has_date = "date" in header
            si = header.index("station_id") if has_station else None
            di = header.index("date") if has_date else None
            X, y, stations, dates = [], [], [], []
            for row in r:
                X.append([float(v) if v != "" else np.nan
                          for v in row[: len(schema)]])
                tv = row[len(schema)]
                y.append(float(tv) if tv != "" else np.nan)
                if has_station:
                    stations.append(row[si])
                if has_date:
                    dates.append(row[di])
        return cls(
            np.array(X), np.array(y), schema=schema,
            station_ids=stations if has_station else None,
            dates=dates if has_date else None,
        )


def _fmt(v):
    # repr round-trips float64 exactly and is stable across runs
    return repr(float(v))


# -------------------------------------------------------------------- scaling

class MinMaxScaler:
    """Per-feature min-max scaling to [0, 1], with optional target bounds.

    Degenerate features (max == min) are flagged and map to 0.0 instead of
    erroring, so pipelines keep running on pathological subsets.
    """

    def __init__(self, feature_min, feature_max, target_min=None, target_max=None):
        self.feature_min = np.asarray(feature_min, dtype=np.float64)
        self.feature_max = np.asarray(feature_max, dtype=np.float64)
        if np.any(self.feature_max < self.feature_min):
            raise DataError("max < min in scaler bounds")
        self.target_min = target_min
        self.target_max = target_max
        self.degenerate = self.feature_max == self.feature_min

    @property
    def has_target(self):
        return self.target_min is not None

    @classmethod
    def fit(cls, data: Dataset, include_target=False):
        if len(data) == 0:
            raise DataError("cannot fit scaler on empty dataset")
        with np.errstate(invalid="ignore"):
            fmin = np.nanmin(data.X, axis=0)
            fmax = np.nanmax(data.X, axis=0)
        if np.any(~np.isfinite(fmin)) or np.any(~np.isfinite(fmax)):
            raise DataError("feature with no finite values")
        tmin = tmax = None
        if include_target:
            if data.y is None:
                raise DataError("dataset has no target column")
            tmin = float(np.nanmin(data.y))
            tmax = float(np.nanmax(data.y))
        return cls(fmin, fmax, tmin, tmax)

    def transform_X(self, X):
        X = np.asarray(X, dtype=np.float64)
        span = np.where(self.degenerate, 1.0, self.feature_max - self.feature_min)
        out = (X - self.feature_min) / span
        out[:, self.degenerate] = 0.0
        return out

    def transform(self, data: Dataset) -> Dataset:
        if data.n_features != self.feature_min.shape[0]:
            raise DataError("schema does not match scaler")
        y = data.y
        if y is not None and self.has_target:
            y = self.transform_target(y)
        return Dataset(self.transform_X(data.X), y, schema=data.schema,
                       station_ids=data.station_ids, dates=data.dates)

    def transform_target(self, y):
        if not self.has_target:
            raise DataError("scaler fitted without target bounds")
        span = self.target_max - self.target_min
        if span == 0.0:
            return np.zeros_like(np.asarray(y, dtype=np.float64))
        return (np.asarray(y, dtype=np.float64) - self.target_min) / span

    def invert_target(self, scaled):
        if not self.has_target:
            raise DataError("scaler fitted without target bounds")
        return np.asarray(scaled, dtype=np.float64) * (
            self.target_max - self.target_min
        ) + self.target_min

    # ------------------------------------------------------- serialization

    def to_dict(self):
        return {
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "target_min": self.target_min,
            "target_max": self.target_max,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature_min"], d["feature_max"],
                   d["target_min"], d["target_max"])


# ------------------------------------------------------------------ splitting

def split_train_test(data: Dataset, train_fraction: float, seed: int):
    """Seeded shuffle split; train gets floor(n * fraction), test the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must be in (0, 1)")
    n = len(data)
    if n < 2:
        raise DataError("need at least 2 rows to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(np.floor(n * train_fraction))
    return data.take(perm[:n_train]), data.take(perm[n_train:])


def kfold_indices(n: int, k: int, seed: int):
    """Shuffled k-fold partition; validation sizes differ by at most one."""
    if not 2 <= k <= n:
        raise DataError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = []
    sizes = np.full(k, n // k, dtype=int)
    sizes[: n % k] += 1
    start = 0
    for s in sizes:
        valid = np.sort(perm[start:start + s])
        train = np.sort(np.concatenate([perm[:start], perm[start + s:]]))
        folds.append((train, valid))
        start += s
    return folds

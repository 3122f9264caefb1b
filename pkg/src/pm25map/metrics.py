"""Evaluation metrics, the multivariate linear baseline, and grid search
with k-fold cross-validation."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from pm25map.data import kfold_indices


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    """RMSE / MAE in the caller's units, squared-Pearson R2 (None when either
    series is constant), APE as a fraction (None when sum(y) == 0)."""

    rmse: float
    mae: float
    r2: float | None
    ape: float | None
    n: int

    def rows(self):
        return [("rmse", self.rmse), ("mae", self.mae),
                ("r2", self.r2), ("ape", self.ape), ("n", self.n)]

    def __str__(self):
        r2 = "n/a" if self.r2 is None else f"{self.r2:.4f}"
        ape = "n/a" if self.ape is None else f"{100 * self.ape:.1f}%"
        return (f"n={self.n}  RMSE={self.rmse:.4f}  MAE={self.mae:.4f}  "
                f"R2={r2}  APE={ape}")


def compute_metrics(y, y_pred) -> MetricsReport:
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y.shape != y_pred.shape:
        raise EvalError("length mismatch between y and y_pred")
    n = len(y)
    if n < 2:
        raise EvalError("need at least 2 samples")
    res = y - y_pred
    rmse = float(np.sqrt(np.mean(res ** 2)))
    mae = float(np.mean(np.abs(res)))

    # ptp, not std: std of an exactly constant vector can round to ~1e-14
    r2 = None
    if np.ptp(y) > 0 and np.ptp(y_pred) > 0:
        r = np.corrcoef(y, y_pred)[0, 1]
        r2 = float(r * r)

    ysum = float(np.sum(y))
    ape = None if ysum == 0 else float(np.sum(np.abs(res)) / ysum)
    return MetricsReport(rmse, mae, r2, ape, n)


# ------------------------------------------------------------- linear model

@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def fit_linear(X, y) -> LinearModel:
    """Least squares with intercept via a stable orthogonal decomposition."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n <= d:
        raise EvalError(f"need more rows ({n}) than features ({d})")
    A = np.column_stack([np.ones(n), X])
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    tol = max(A.shape) * np.finfo(float).eps * diag.max()
    bad = np.where(diag < tol)[0]
    if bad.size:
        cols = ", ".join("intercept" if b == 0 else f"feature {b - 1}"
                         for b in bad)
        raise EvalError(f"design matrix rank-deficient: collinear column(s) "
                        f"{cols}")
    beta = np.linalg.solve(r, q.T @ y)
    return LinearModel(beta[1:], float(beta[0]))


# --------------------------------------------------------------- grid search

@dataclass
class GridSpec:
    """Named hyperparameter axes; iteration is row-major in declaration
    order so tie-breaking is reproducible."""

    axes: dict
    folds: int = 5
    scoring: str = "rmse"

    def __post_init__(self):
        if not self.axes:
            raise EvalError("grid has no axes")
        for name, vals in self.axes.items():
            if len(vals) == 0:
                raise EvalError(f"axis {name!r} has no candidates")

    def cells(self):
        names = list(self.axes.keys())
        for combo in itertools.product(*(self.axes[n] for n in names)):
            yield dict(zip(names, combo))


def grid_search(X, y, model_factory, grid: GridSpec, seed: int,
                log=None):
    """Exhaustive search minimizing mean k-fold validation RMSE.

    model_factory(config_dict) must return an object with fit(X, y) and
    predict(X). Failing cells are excluded from the ranking and logged.
    Returns (best_config, cv_table); cv_table rows are dicts with the axis
    values, per-fold RMSE list, mean RMSE, and a validity flag.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = kfold_indices(len(y), grid.folds, seed)
    cv_table = []
    best = None
    best_rmse = np.inf
    for cell in grid.cells():
        fold_rmse = []
        valid = True
        for tr, va in folds:
            try:
                model = model_factory(cell)
                model.fit(X[tr], y[tr])
                pred = model.predict(X[va])
                fold_rmse.append(float(np.sqrt(np.mean((pred - y[va]) ** 2))))
            except Exception as exc:  # noqa: BLE001 - cell failure is data
                valid = False
                if log is not None:
                    log(f"grid cell {cell} failed: {exc}")
                break
        mean_rmse = float(np.mean(fold_rmse)) if valid else None
        cv_table.append({"config": dict(cell), "fold_rmse": fold_rmse,
                         "mean_rmse": mean_rmse, "valid": valid})
        if valid and mean_rmse < best_rmse:
            best_rmse = mean_rmse
            best = dict(cell)
    if best is None:
        raise EvalError("every grid cell failed")
    return best, cv_table


def write_cv_table(cv_table, path):
    """One row per configuration: axis values, per-fold RMSE, mean RMSE."""
    axis_names = list(cv_table[0]["config"].keys())
    n_folds = max(len(r["fold_rmse"]) for r in cv_table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(axis_names
                   + [f"fold{i}_rmse" for i in range(n_folds)]
                   + ["mean_rmse", "valid"])
        for row in cv_table:
            folds = [repr(v) for v in row["fold_rmse"]]
            folds += [""] * (n_folds - len(folds))
            w.writerow([row["config"][a] for a in axis_names] + folds
                       + ["" if row["mean_rmse"] is None
                          else repr(row["mean_rmse"]),
                          int(row["valid"])])

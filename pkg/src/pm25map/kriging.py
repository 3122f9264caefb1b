"""Ordinary kriging with fitted semivariograms.

Distances are planar Euclidean on (x, y); at city scale (a fraction of a
degree) the distortion from treating degrees as planar is negligible next to
the 1 km cell size. Variogram curves use the effective-range convention
(gaussian/exponential reach ~95% of the sill at h = range).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist

VARIOGRAM_KINDS = ("spherical", "exponential", "gaussian")


class KrigingError(ValueError):
    pass


@dataclass(frozen=True)
class VariogramModel:
    kind: str
    nugget: float
    psill: float          # partial sill; total sill = nugget + psill
    range_: float

    def __post_init__(self):
        if self.kind not in VARIOGRAM_KINDS:
            raise KrigingError(f"unknown variogram kind {self.kind!r}")
        if self.nugget < 0 or self.psill < 0 or self.range_ <= 0:
            raise KrigingError("variogram parameters out of range")

    def __call__(self, h):
        """Semivariance at lag h; gamma(0) = 0 by convention, the nugget
        applies for h > 0."""
        h = np.asarray(h, dtype=np.float64)
        r = self.range_
        if self.kind == "spherical":
            hr = np.minimum(h / r, 1.0)
            struct = 1.5 * hr - 0.5 * hr ** 3
        elif self.kind == "exponential":
            struct = 1.0 - np.exp(-3.0 * h / r)
        else:  # gaussian
            struct = 1.0 - np.exp(-3.0 * (h / r) ** 2)
        gamma = self.nugget + self.psill * struct
        return np.where(h > 0, gamma, 0.0)


def empirical_variogram(points, n_bins=15, max_dist=None):
    """Binned pairwise semivariances.

    points: array-like of (x, y, value). Returns a list of
    (lag, semivariance, pair_count) for non-empty bins; lag is the bin
    midpoint. max_dist defaults to half the maximum pairwise distance.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        raise KrigingError("need at least 2 points")
    xy = pts[:, :2]
    v = pts[:, 2]
    d = cdist(xy, xy)
    iu = np.triu_indices(len(pts), k=1)
    dists = d[iu]
    if np.all(dists == 0):
        raise KrigingError("all points coincident")
    if max_dist is None:
        max_dist = float(dists.max()) / 2.0
    if max_dist <= 0:
        raise KrigingError("max_dist must be positive")
    sv = 0.5 * (v[iu[0]] - v[iu[1]]) ** 2
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    which = np.digitize(dists, edges[1:-1])
    keep = dists <= max_dist
    out = []
    for b in range(n_bins):
        sel = keep & (which == b)
        cnt = int(np.sum(sel))
        if cnt == 0:
            continue
        lag = float((edges[b] + edges[b + 1]) / 2.0)
        out.append((lag, float(np.mean(sv[sel])), cnt))
    return out


def fit_variogram(empirical, kind) -> VariogramModel:
    """Pair-count-weighted least squares over (nugget, psill, range).

    Falls back to (nugget 0, sill = mean semivariance, range = half max lag)
    with a warning if the optimizer fails.
    """
    if len(empirical) < 3:
        raise KrigingError("need at least 3 non-empty bins")
    lags = np.array([e[0] for e in empirical])
    gammas = np.array([e[1] for e in empirical])
    counts = np.array([e[2] for e in empirical], dtype=np.float64)
    w = np.sqrt(counts)

    def residuals(p):
        nug, psill, rng = p
        vm = VariogramModel(kind, max(nug, 0.0), max(psill, 0.0),
                            max(rng, 1e-12))
        return w * (vm(lags) - gammas)

    sill0 = max(float(gammas.max()), 1e-12)
    r0 = max(float(lags.max()) / 2.0, 1e-12)
    try:
        sol = least_squares(
            residuals, x0=[0.0, sill0, r0],
            bounds=([0.0, 0.0, 1e-12],
                    [np.inf, np.inf, 1e3 * float(lags.max())]))
        if not sol.success:
            raise RuntimeError(sol.message)
        nug, psill, rng = sol.x
        return VariogramModel(kind, float(nug), float(psill), float(rng))
    except Exception as exc:  # noqa: BLE001
        warnings.warn(f"variogram fit failed ({exc}); using fallback")
        return VariogramModel(kind, 0.0, float(np.mean(gammas)), r0)


@dataclass
class KrigingSolution:
    value: float
    variance: float
    weights: np.ndarray
    lagrange: float


def _dedup_samples(samples):
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise KrigingError("need at least 1 sample")
    xy, inv = np.unique(pts[:, :2], axis=0, return_inverse=True)
    if len(xy) < len(pts):
        warnings.warn("duplicate sample locations averaged")
        vals = np.zeros(len(xy))
        cnt = np.zeros(len(xy))
        np.add.at(vals, inv, pts[:, 2])
        np.add.at(cnt, inv, 1.0)
        return np.column_stack([xy, vals / cnt])
    return pts


def krige_solve(samples, vg: VariogramModel, targets, full=False):
    """Solve the ordinary kriging system for each target.

    Returns list of KrigingSolution if full, else an (n_targets, 2) array of
    (prediction, kriging variance). One LU factorization of the augmented
    sample matrix is shared across all targets.
    """
    pts = _dedup_samples(samples)
    xy = pts[:, :2]
    vals = pts[:, 2]
    m = len(pts)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))

    A = np.empty((m + 1, m + 1))
    A[:m, :m] = vg(cdist(xy, xy))
    A[m, :m] = 1.0
    A[:m, m] = 1.0
    A[m, m] = 0.0
    try:
        lu = lu_factor(A)
        if not np.all(np.isfinite(lu[0])):
            raise np.linalg.LinAlgError("non-finite factorization")
    except Exception as exc:
        raise KrigingError(f"singular kriging system: {exc}") from exc

    g0 = vg(cdist(targets, xy))           # (t, m)
    rhs = np.empty((m + 1, len(targets)))
    rhs[:m] = g0.T
    rhs[m] = 1.0
    sol = lu_solve(lu, rhs)               # (m+1, t)
    wts = sol[:m]
    mu = sol[m]
    preds = wts.T @ vals
    variances = np.einsum("mt,tm->t", wts, g0) + mu

    if full:
        return [KrigingSolution(float(preds[t]), float(variances[t]),
                                wts[:, t].copy(), float(mu[t]))
                for t in range(len(targets))]
    return np.column_stack([preds, variances])


def krige_predict(samples, vg: VariogramModel, targets):
    """(value, variance) per target point."""
    return krige_solve(samples, vg, targets, full=False)


def kriging_grid_search(samples, kinds=VARIOGRAM_KINDS, cv_folds=5,
                        n_bins=15, seed=0):
    """Pick the variogram kind minimizing leave-k-out CV RMSE.

    Ties (within 1e-12) break to the first kind in declaration order.
    Returns (best_kind, fitted VariogramModel, cv_rmse_by_kind).
    """
    pts = _dedup_samples(samples)
    n = len(pts)
    if n < cv_folds:
        raise KrigingError("not enough samples for CV folds")
    emp = empirical_variogram(pts, n_bins=n_bins)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, cv_folds)

    results = {}
    models = {}
    for kind in kinds:
        try:
            vm = fit_variogram(emp, kind)
        except KrigingError:
            continue
        models[kind] = vm
        sq = []
        for hold in folds:
            mask = np.ones(n, dtype=bool)
            mask[hold] = False
            if mask.sum() < 1:
                continue
            pred = krige_predict(pts[mask], vm, pts[hold, :2])[:, 0]
            sq.extend((pred - pts[hold, 2]) ** 2)
        results[kind] = float(np.sqrt(np.mean(sq)))

    if not results:
        raise KrigingError("no variogram kind could be fitted")
    best = None
    for kind in kinds:
        if kind not in results:
            continue
        if best is None or results[kind] < results[best] - 1e-12:
            best = kind
    return best, models[best], results

"""Deep ensemble forest: stacked layers of forest estimators whose
predictions are appended to the carried feature matrix, plus a final
averaging head.

Training-time augmentation columns come from out-of-fold predictions by
default; passing fully-grown in-sample predictions forward would hand the
next layer near-perfect copies of the target. In-sample mode is kept as a
toggle for fidelity experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from pm25map.data import kfold_indices
from pm25map.trees import (
    EXTRA_TREES, RANDOM_FOREST, ForestEstimator, ModelError, TreeConfig,
    _read_container, _write_container,
)

CASCADE_MAGIC = "pm25map-cascade"

AUTO_GROWTH_TOL = 1e-3
MAX_AUTO_LAYERS = 16


@dataclass(frozen=True)
class CascadeConfig:
    """Tuned defaults: 2 layers, 2 RF + 2 ET estimators, 2000 fully-grown
    trees per estimator."""

    n_layers: int | None = 2          # None = auto growth
    n_random_forest: int = 2
    n_extra_trees: int = 2
    trees_per_estimator: int = 2000
    tree_config: TreeConfig = field(default_factory=TreeConfig)
    augmentation_mode: str = "out_of_fold"
    cv_folds_for_augmentation: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.augmentation_mode not in ("out_of_fold", "in_sample"):
            raise ModelError(
                f"unknown augmentation_mode {self.augmentation_mode!r}")
        if self.n_layers is not None and self.n_layers < 0:
            raise ModelError("n_layers must be >= 0 or None for auto")
        if self.n_layers is None and self.augmentation_mode != "out_of_fold":
            raise ModelError("auto layer growth needs out_of_fold validation")

    @property
    def estimators_per_layer(self):
        return self.n_random_forest + self.n_extra_trees

    def estimator_kinds(self):
        # augmentation column order: RF estimators first, then ET
        return ([RANDOM_FOREST] * self.n_random_forest
                + [EXTRA_TREES] * self.n_extra_trees)

    def to_dict(self):
        d = asdict(self)
        d["tree_config"] = asdict(self.tree_config)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["tree_config"] = TreeConfig(**d["tree_config"])
        return cls(**d)


def augment(layer_outputs, carried):
    """Column-wise concatenation: carried block first (bit-identical), then
    the new estimator output columns."""
    layer_outputs = np.asarray(layer_outputs, dtype=np.float64)
    carried = np.asarray(carried, dtype=np.float64)
    if layer_outputs.size == 0:
        return carried
    if layer_outputs.ndim == 1:
        layer_outputs = layer_outputs.reshape(-1, 1)
    if layer_outputs.shape[0] != carried.shape[0]:
        raise ModelError("row count mismatch in augmentation")
    return np.hstack([carried, layer_outputs])


def _estimator_seed(master, layer, est, tag):
    rng = np.random.default_rng(
        [int(master) & 0xFFFFFFFF, layer + 1, est + 1, tag + 1])
    return int(rng.integers(1, 2 ** 63))


class CascadeModel:
    """Fitted cascade: per-layer estimator lists plus the averaging head."""

    def __init__(self, layers, head, config: CascadeConfig, n_features,
                 layer_val_rmse=None):
        self.layers = layers
        self.head = head
        self.config = config
        self.n_features = n_features
        self.layer_val_rmse = layer_val_rmse or []

    # ------------------------------------------------------------ fitting

    @classmethod
    def fit(cls, X, y, cfg: CascadeConfig = None, n_jobs: int = 1):
        cfg = cfg or CascadeConfig()
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        n = X.shape[0]
        k = cfg.cv_folds_for_augmentation
        if cfg.augmentation_mode == "out_of_fold" and n < k:
            raise ModelError(f"need at least {k} rows for out-of-fold "
                             "augmentation")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ModelError("non-finite values in training data")

        auto = cfg.n_layers is None
        target_layers = MAX_AUTO_LAYERS if auto else cfg.n_layers
        kinds = cfg.estimator_kinds()

        layers = []
        val_rmse = []
        carried = X
        best_rmse = np.inf
        for j in range(target_layers):
            estimators, oof = cls._fit_layer(carried, y, kinds, cfg, j, n_jobs)
            layer_rmse = float(np.sqrt(np.mean(
                (oof.mean(axis=1) - y) ** 2))) if oof is not None else np.nan
            if auto and oof is not None and \
                    best_rmse - layer_rmse <= AUTO_GROWTH_TOL:
                break
            layers.append(estimators)
            val_rmse.append(layer_rmse)
            best_rmse = min(best_rmse, layer_rmse)
            carried = augment(oof if oof is not None
                              else np.column_stack(
                                  [e.predict(carried) for e in estimators]),
                              carried)

        head = [ForestEstimator.fit(
            carried, y, kind, cfg.trees_per_estimator, cfg.tree_config,
            seed=_estimator_seed(cfg.seed, len(layers), i, 0), n_jobs=n_jobs)
            for i, kind in enumerate(kinds)]
        return cls(layers, head, cfg, X.shape[1], val_rmse)

    @classmethod
    def _fit_layer(cls, carried, y, kinds, cfg, layer_index, n_jobs):
        """Fit one layer's estimators; returns (estimators, oof_columns).

        Each estimator is fitted on the full layer input for inference; its
        augmentation column is assembled from k-fold out-of-fold predictions
        (or in-sample predictions in in_sample mode, where oof is None).
        """
        n = carried.shape[0]
        estimators = []
        oof = None
        if cfg.augmentation_mode == "out_of_fold":
            folds = kfold_indices(n, cfg.cv_folds_for_augmentation,
                                  _estimator_seed(cfg.seed, layer_index, 0, 99))
            oof = np.empty((n, len(kinds)), dtype=np.float64)
        for i, kind in enumerate(kinds):
            est = ForestEstimator.fit(
                carried, y, kind, cfg.trees_per_estimator, cfg.tree_config,
                seed=_estimator_seed(cfg.seed, layer_index, i, 0),
                n_jobs=n_jobs)
            estimators.append(est)
            if oof is not None:
                for fold_no, (tr, va) in enumerate(folds):
                    fold_est = ForestEstimator.fit(
                        carried[tr], y[tr], kind, cfg.trees_per_estimator,
                        cfg.tree_config,
                        seed=_estimator_seed(cfg.seed, layer_index, i,
                                             fold_no + 1),
                        n_jobs=n_jobs)
                    oof[va, i] = fold_est.predict(carried[va])
        return estimators, oof

    # --------------------------------------------------------- prediction

    def propagate(self, X):
        """Run X through the cascade layers; returns the final feature
        matrix seen by the head."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise ModelError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        carried = X
        for estimators in self.layers:
            cols = np.column_stack([e.predict(carried) for e in estimators])
            carried = augment(cols, carried)
        return carried

    def predict(self, X):
        carried = self.propagate(X)
        preds = np.stack([e.predict(carried) for e in self.head])
        return preds.mean(axis=0)

    # ------------------------------------------------------ serialization

    def save(self, path):
        manifest = {
            "magic": CASCADE_MAGIC,
            "version": 1,
            "config": self.config.to_dict(),
            "n_features": int(self.n_features),
            "n_layers": len(self.layers),
            "layer_val_rmse": self.layer_val_rmse,
            "estimators": {},
        }
        arrays = {}
        for tag, est in self._iter_estimators():
            manifest["estimators"][tag] = est.meta()
            for k, v in est.to_arrays().items():
                arrays[f"{tag}_{k}"] = v
        _write_container(path, manifest, arrays)

    def _iter_estimators(self):
        for j, estimators in enumerate(self.layers):
            for i, est in enumerate(estimators):
                yield f"L{j}E{i}", est
        for i, est in enumerate(self.head):
            yield f"HE{i}", est

    @classmethod
    def load(cls, path):
        manifest, npz = _read_container(path)
        if manifest["magic"] != CASCADE_MAGIC:
            raise ModelError(f"{path} is not a cascade container")

        def load_est(tag):
            arrays = {k[len(tag) + 1:]: npz[k] for k in npz.files
                      if k.startswith(tag + "_")}
            return ForestEstimator.from_arrays(arrays,
                                               manifest["estimators"][tag])

        cfg = CascadeConfig.from_dict(manifest["config"])
        layers = [[load_est(f"L{j}E{i}")
                   for i in range(cfg.estimators_per_layer)]
                  for j in range(manifest["n_layers"])]
        head = [load_est(f"HE{i}") for i in range(cfg.estimators_per_layer)]
        return cls(layers, head, cfg, manifest["n_features"],
                   manifest.get("layer_val_rmse"))

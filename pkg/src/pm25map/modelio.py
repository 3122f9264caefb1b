"""Serialization of trained model bundles: the fitted model (linear, forest,
or cascade) together with the input scaler and the feature schema.

Round-tripping preserves predictions bit-exactly: node thresholds and leaf
values are stored as raw float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pm25map.cascade import CascadeConfig, CascadeModel
from pm25map.data import FeatureSchema, MinMaxScaler
from pm25map.metrics import LinearModel
from pm25map.trees import (
    ForestEstimator, ModelError, _read_container, _write_container,
)

BUNDLE_MAGIC = "pm25map-model"

FAMILY_LINEAR = "linear"
FAMILY_RF = "rf"
FAMILY_ET = "et"
FAMILY_CASCADE = "cascade"


@dataclass
class ModelBundle:
    family: str
    model: object
    scaler: MinMaxScaler
    schema: FeatureSchema

    def predict_scaled(self, X_scaled):
        return self.model.predict(X_scaled)

    def predict(self, X_raw):
        """Raw-feature prediction on the original target scale."""
        Xs = self.scaler.transform_X(np.asarray(X_raw, dtype=np.float64))
        pred = self.model.predict(Xs)
        if self.scaler.has_target:
            pred = self.scaler.invert_target(pred)
        return pred


def save_bundle(bundle: ModelBundle, path):
    manifest = {
        "magic": BUNDLE_MAGIC,
        "version": 1,
        "family": bundle.family,
        "scaler": bundle.scaler.to_dict(),
        "schema": list(bundle.schema.names),
    }
    arrays = {}
    if bundle.family == FAMILY_LINEAR:
        manifest["intercept"] = float(bundle.model.intercept)
        arrays["coef"] = np.asarray(bundle.model.coef)
    elif bundle.family in (FAMILY_RF, FAMILY_ET):
        manifest["estimator"] = bundle.model.meta()
        for k, v in bundle.model.to_arrays().items():
            arrays[f"est_{k}"] = v
    elif bundle.family == FAMILY_CASCADE:
        m: CascadeModel = bundle.model
        manifest["cascade"] = {
            "config": m.config.to_dict(),
            "n_features": int(m.n_features),
            "n_layers": len(m.layers),
            "layer_val_rmse": m.layer_val_rmse,
            "estimators": {},
        }
        for tag, est in m._iter_estimators():
            manifest["cascade"]["estimators"][tag] = est.meta()
            for k, v in est.to_arrays().items():
                arrays[f"{tag}_{k}"] = v
    else:
        raise ModelError(f"unknown model family {bundle.family!r}")
    _write_container(path, manifest, arrays)


def load_bundle(path) -> ModelBundle:
    manifest, npz = _read_container(path)
    if manifest["magic"] != BUNDLE_MAGIC:
        raise ModelError(f"{path} is not a model bundle")
    scaler = MinMaxScaler.from_dict(manifest["scaler"])
    schema = FeatureSchema(names=tuple(manifest["schema"]))
    family = manifest["family"]

    if family == FAMILY_LINEAR:
        model = LinearModel(npz["coef"], manifest["intercept"])
    elif family in (FAMILY_RF, FAMILY_ET):
        arrays = {k[len("est_"):]: npz[k] for k in npz.files
                  if k.startswith("est_")}
        model = ForestEstimator.from_arrays(arrays, manifest["estimator"])
    elif family == FAMILY_CASCADE:
        frag = manifest["cascade"]
        cfg = CascadeConfig.from_dict(frag["config"])

        def load_est(tag):
            arrays = {k[len(tag) + 1:]: npz[k] for k in npz.files
                      if k.startswith(tag + "_")}
            return ForestEstimator.from_arrays(arrays,
                                               frag["estimators"][tag])

        layers = [[load_est(f"L{j}E{i}")
                   for i in range(cfg.estimators_per_layer)]
                  for j in range(frag["n_layers"])]
        head = [load_est(f"HE{i}") for i in range(cfg.estimators_per_layer)]
        model = CascadeModel(layers, head, cfg, frag["n_features"],
                             frag.get("layer_val_rmse"))
    else:
        raise ModelError(f"unknown model family {family!r}")
    return ModelBundle(family, model, scaler, schema)

"""CART regression trees and the two forest estimators (random forest,
extremely randomized trees).

Determinism contract: every tree's randomness derives only from
(master seed, tree index), so parallel training order cannot change results.
"""

from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from pm25map._grow import SPLIT_BEST, SPLIT_RANDOM, grow_tree, predict_tree_kernel

MODEL_MAGIC = "pm25map-forest"
MODEL_VERSION = 1

RANDOM_FOREST = "random_forest"
EXTRA_TREES = "extra_trees"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TreeConfig:
    """Growth limits and split policy for a single tree.

    max_features accepts "sqrt", "all", a fraction in (0, 1], or a fixed
    integer count; it resolves to at least 1 candidate feature.
    """

    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: object = "sqrt"
    split_mode: str = "best_of_subset"

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ModelError("min_samples_leaf must be >= 1")
        if self.split_mode not in ("best_of_subset", "random_threshold"):
            raise ModelError(f"unknown split_mode {self.split_mode!r}")

    def resolve_max_features(self, d: int) -> int:
        rule = self.max_features
        if rule in (None, "all"):
            k = d
        elif rule == "sqrt":
            k = int(np.sqrt(d))
        elif isinstance(rule, int) and not isinstance(rule, bool):
            k = rule
        elif isinstance(rule, float):
            if not 0.0 < rule <= 1.0:
                raise ModelError("fractional max_features must be in (0, 1]")
            k = int(rule * d)
        else:
            raise ModelError(f"bad max_features rule {rule!r}")
        if not 1 <= min(max(k, 1), d) <= d:
            raise ModelError("max_features resolves outside 1..d")
        return min(max(k, 1), d)

    @property
    def split_code(self):
        return SPLIT_BEST if self.split_mode == "best_of_subset" else SPLIT_RANDOM


class DecisionTree:
    """Fitted CART regression tree stored as packed node arrays."""

    def __init__(self, feature, threshold, left, right, value, n_features):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.n_features = n_features

    @property
    def n_nodes(self):
        return len(self.feature)

    @classmethod
    def fit(cls, X, y, cfg: TreeConfig, seed: int = 0) -> "DecisionTree":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ModelError("X must be a non-empty 2-D matrix")
        if y.shape != (X.shape[0],):
            raise ModelError("y length does not match X")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ModelError("non-finite values in training data")
        depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
        arrays = grow_tree(X, y, depth, cfg.min_samples_leaf,
                           cfg.resolve_max_features(X.shape[1]),
                           cfg.split_code, np.uint64(seed))
        return cls(*arrays, n_features=X.shape[1])

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ModelError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.empty(X.shape[0], dtype=np.float64)
        predict_tree_kernel(self.feature, self.threshold, self.left,
                            self.right, self.value, X, out)
        return out


def _tree_seed(master_seed: int, tree_index: int):
    """Per-tree RNG and kernel seed from (master seed, tree index)."""
    rng = np.random.default_rng([int(master_seed) & 0xFFFFFFFF, tree_index])
    return rng, int(rng.integers(1, 2 ** 63))


def _fit_one_tree(X, y, cfg, master_seed, tree_index, bootstrap):
    rng, kernel_seed = _tree_seed(master_seed, tree_index)
    if bootstrap:
        n = X.shape[0]
        boot = rng.integers(0, n, size=n)
        return DecisionTree.fit(X[boot], y[boot], cfg, kernel_seed)
    return DecisionTree.fit(X, y, cfg, kernel_seed)


class ForestEstimator:
    """Mean-aggregated ensemble of CART trees (RF or ET flavor)."""

    def __init__(self, kind, trees, config, bootstrap, seed, n_features):
        self.kind = kind
        self.trees = trees
        self.config = config
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_features = n_features

    @classmethod
    def fit(cls, X, y, kind, n_trees, cfg: TreeConfig = None, seed: int = 0,
            n_jobs: int = 1, bootstrap=None):
        if n_trees < 1:
            raise ModelError("n_trees must be >= 1")
        if kind not in (RANDOM_FOREST, EXTRA_TREES):
            raise ModelError(f"unknown forest kind {kind!r}")
        if cfg is None:
            cfg = TreeConfig(
                split_mode="best_of_subset" if kind == RANDOM_FOREST
                else "random_threshold")
        if bootstrap is None:
            bootstrap = kind == RANDOM_FOREST
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)

        if n_jobs <= 1:
            trees = [_fit_one_tree(X, y, cfg, seed, i, bootstrap)
                     for i in range(n_trees)]
        else:
            # grow_tree releases the GIL, so threads give real parallelism;
            # results are gathered in tree-index order
            with ThreadPoolExecutor(max_workers=n_jobs) as ex:
                futures = [ex.submit(_fit_one_tree, X, y, cfg, seed, i,
                                     bootstrap) for i in range(n_trees)]
                trees = [f.result() for f in futures]
        return cls(kind, trees, cfg, bootstrap, seed, X.shape[1])

    @property
    def n_trees(self):
        return len(self.trees)

    def tree_predictions(self, X):
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        return self.tree_predictions(X).mean(axis=0)

    # ----------------------------------------------------- serialization

    def to_arrays(self):
        """Concatenated node arrays + offsets, for the model container."""
        offsets = np.zeros(self.n_trees + 1, dtype=np.int64)
        for i, t in enumerate(self.trees):
            offsets[i + 1] = offsets[i] + t.n_nodes
        return {
            "feature": np.concatenate([t.feature for t in self.trees]),
            "threshold": np.concatenate([t.threshold for t in self.trees]),
            "left": np.concatenate([t.left for t in self.trees]),
            "right": np.concatenate([t.right for t in self.trees]),
            "value": np.concatenate([t.value for t in self.trees]),
            "offsets": offsets,
        }

    def meta(self):
        return {
            "kind": self.kind,
            "bootstrap": bool(self.bootstrap),
            "seed": int(self.seed),
            "n_features": int(self.n_features),
            "n_trees": self.n_trees,
            "config": asdict(self.config),
        }

    @classmethod
    def from_arrays(cls, arrays, meta):
        offs = arrays["offsets"]
        trees = []
        for i in range(len(offs) - 1):
            a, b = offs[i], offs[i + 1]
            trees.append(DecisionTree(
                arrays["feature"][a:b], arrays["threshold"][a:b],
                arrays["left"][a:b], arrays["right"][a:b],
                arrays["value"][a:b], meta["n_features"]))
        return cls(meta["kind"], trees, TreeConfig(**meta["config"]),
                   meta["bootstrap"], meta["seed"], meta["n_features"])

    def save(self, path):
        save_forest(self, path)


def save_forest(forest: ForestEstimator, path):
    """Versioned self-describing container: manifest + packed node arrays."""
    manifest = {
        "magic": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "estimator": forest.meta(),
    }
    arrays = {f"est_{k}": v for k, v in forest.to_arrays().items()}
    _write_container(path, manifest, arrays)


def load_forest(path) -> ForestEstimator:
    manifest, npz = _read_container(path)
    arrays = {k[len("est_"):]: npz[k] for k in npz.files if k.startswith("est_")}
    return ForestEstimator.from_arrays(arrays, manifest["estimator"])


def _write_container(path, manifest, arrays):
    payload = dict(arrays)
    payload["manifest"] = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez_compressed(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_container(path):
    npz = np.load(path)
    if "manifest" not in npz.files:
        raise ModelError(f"{path} is not a pm25map model container")
    manifest = json.loads(bytes(npz["manifest"].tobytes()).decode())
    if manifest.get("magic") not in (MODEL_MAGIC, "pm25map-cascade",
                                     "pm25map-model"):
        raise ModelError(f"bad magic string in {path}")
    if manifest.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported container version in {path}")
    return manifest, npz

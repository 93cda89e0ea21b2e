"""Gradient boosted decision trees with logistic loss, built from scratch.

Trees are grown by exact greedy search over pre-binned feature values using
second-order gradients.  Split thresholds are midpoints between consecutive
unique training values and rows with x <= threshold go left.  Node covers
are the training-weight sums of the rows that grew the node, so
cover(parent) = cover(left) + cover(right) holds throughout; downstream
attribution relies on that identity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ArtifactError, CapacityError, TrainingError, UsageError

MAX_BINS = 65535


def sigmoid(margin: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    m = np.asarray(margin, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_loss(margin: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    """Weighted mean logistic loss from raw margins."""
    per_row = np.logaddexp(0.0, margin) - y * margin
    return float(np.sum(weights * per_row) / np.sum(weights))


@dataclass(frozen=True)
class TrainConfig:
    n_estimators: int = 250
    learning_rate: float = 0.05
    max_depth: int = 10
    subsample: float = 0.9
    colsample_bytree: float = 0.9
    positive_class_weight: float = 5.0
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise UsageError("n_estimators must be non-negative")
        if not 0.0 < self.subsample <= 1.0 or not 0.0 < self.colsample_bytree <= 1.0:
            raise UsageError("subsample fractions must be in (0, 1]")
        if self.max_depth < 1:
            raise UsageError("max_depth must be at least 1")
        if self.learning_rate <= 0.0:
            raise UsageError("learning_rate must be positive")
        if self.positive_class_weight <= 0.0:
            raise UsageError("positive_class_weight must be positive")
        if self.reg_lambda < 0.0 or self.min_child_weight < 0.0:
            raise UsageError("regularization terms must be non-negative")


@dataclass
class Tree:
    """One regression tree in flat-array form with local node indexes."""

    feature: np.ndarray = field(repr=False)   # int32, -1 marks a leaf
    threshold: np.ndarray = field(repr=False)  # float64
    left: np.ndarray = field(repr=False)       # int32
    right: np.ndarray = field(repr=False)      # int32
    cover: np.ndarray = field(repr=False)      # float64 training-weight sums
    value: np.ndarray = field(repr=False)      # float64, leaf weights

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)


@dataclass
class _Flat:
    """Ensemble concatenated for the compiled kernels (absolute indexes)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    coeffs: np.ndarray


def _flatten(trees: list[Tree], learning_rate: float) -> _Flat:
    roots = np.zeros(len(trees), dtype=np.int32)
    off = 0
    for t, tree in enumerate(trees):
        roots[t] = off
        off += tree.n_nodes
    shift = [
        np.where(tree.left >= 0, tree.left + roots[t], -1).astype(np.int32)
        for t, tree in enumerate(trees)
    ]
    shift_r = [
        np.where(tree.right >= 0, tree.right + roots[t], -1).astype(np.int32)
        for t, tree in enumerate(trees)
    ]
    cat = lambda part, dtype: (np.concatenate(part).astype(dtype) if part
                               else np.empty(0, dtype=dtype))
    return _Flat(
        feature=cat([t.feature for t in trees], np.int32),
        threshold=cat([t.threshold for t in trees], np.float64),
        left=cat(shift, np.int32),
        right=cat(shift_r, np.int32),
        cover=cat([t.cover for t in trees], np.float64),
        value=cat([t.value for t in trees], np.float64),
        roots=roots,
        coeffs=np.full(len(trees), learning_rate, dtype=np.float64),
    )


def _bin_features(X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
    """Map every column to per-feature bin ordinals in ascending value order."""
    n, F = X.shape
    binned = np.empty((n, F), dtype=np.uint16)
    uniques: list[np.ndarray] = []
    counts = np.empty(F, dtype=np.int64)
    for j in range(F):
        u = np.unique(X[:, j])
        if len(u) > MAX_BINS:
            raise CapacityError(
                f"feature {j} has {len(u)} distinct values; the binned split "
                f"search supports at most {MAX_BINS}")
        uniques.append(u)
        counts[j] = len(u)
        binned[:, j] = np.searchsorted(u, X[:, j])
    return binned, uniques, counts


class GradientBoostedTrees:
    """Binary classifier: F(x) = const + learning_rate * sum of tree outputs."""

    def __init__(self, config: TrainConfig | None = None):
        self.config = config if config is not None else TrainConfig()
        self.const_: float = 0.0
        self.trees_: list[Tree] = []
        self.n_features_: int = 0
        self.train_losses_: list[float] = []
        self._flat: _Flat | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise UsageError("X must be 2-D with one label per row")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise UsageError("labels must be 0 or 1")
        n, F = X.shape
        if n == 0:
            raise TrainingError("cannot fit on an empty dataset")
        if F == 0:
            raise UsageError("X must have at least one feature")
        if len(np.unique(y)) < 2:
            raise TrainingError("training labels contain a single class")

        cfg = self.config
        w = np.where(y == 1.0, cfg.positive_class_weight, 1.0)
        p0 = float(np.sum(w * y) / np.sum(w))
        self.const_ = float(np.log(p0 / (1.0 - p0)))
        self.n_features_ = F
        self.trees_ = []
        self.train_losses_ = []
        self._flat = None

        binned, uniques, bin_counts = _bin_features(X)
        rng = np.random.default_rng(cfg.seed)
        n_rows = max(1, int(cfg.subsample * n))
        n_cols = max(1, int(cfg.colsample_bytree * F))
        margin = np.full(n, self.const_, dtype=np.float64)

        for _ in range(cfg.n_estimators):
            p = sigmoid(margin)
            grad = w * (p - y)
            hess = w * p * (1.0 - p)
            if n_rows < n:
                rows = np.sort(rng.choice(n, size=n_rows, replace=False))
            else:
                rows = np.arange(n)
            rows = rows.astype(np.int64)
            if n_cols < F:
                feats = np.sort(rng.choice(F, size=n_cols, replace=False))
            else:
                feats = np.arange(F)
            feats = feats.astype(np.int64)

            tree = self._grow(binned, uniques, bin_counts, grad, hess, w, rows, feats)
            self.trees_.append(tree)
            flat_one = _flatten([tree], 1.0)
            margin += cfg.learning_rate * _kernels.predict_margin(
                flat_one.feature, flat_one.threshold, flat_one.left, flat_one.right,
                flat_one.value, flat_one.roots, flat_one.coeffs, X)
            self.train_losses_.append(log_loss(margin, y, w))

        self._flat = _flatten(self.trees_, cfg.learning_rate)
        return self

    def _grow(self, binned, uniques, bin_counts, grad, hess, w, rows, feats) -> Tree:
        cfg = self.config
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        cover: list[float] = []
        value: list[float] = []

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            cover.append(0.0)
            value.append(0.0)
            return len(feature) - 1

        stack = [(new_node(), rows, 0)]
        while stack:
            idx, node_rows, depth = stack.pop()
            cover[idx] = float(np.sum(w[node_rows]))
            split = (-1, -1, 0.0)
            if depth < cfg.max_depth:
                split = _kernels.best_split(binned, bin_counts, grad, hess,
                                            node_rows, feats, cfg.reg_lambda,
                                            cfg.min_child_weight)
            f, b, _ = split
            if f < 0:
                G = float(np.sum(grad[node_rows]))
                H = float(np.sum(hess[node_rows]))
                value[idx] = -G / (H + cfg.reg_lambda)
                continue
            go_left = binned[node_rows, f] <= b
            feature[idx] = f
            threshold[idx] = float((uniques[f][b] + uniques[f][b + 1]) / 2.0)
            li = new_node()
            ri = new_node()
            left[idx] = li
            right[idx] = ri
            stack.append((ri, node_rows[~go_left], depth + 1))
            stack.append((li, node_rows[go_left], depth + 1))

        return Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            cover=np.asarray(cover, dtype=np.float64),
            value=np.asarray(value, dtype=np.float64),
        )

    def _require_fit(self):
        if self.n_features_ == 0:
            raise UsageError("model is not fitted")
        if self._flat is None:
            self._flat = _flatten(self.trees_, self.config.learning_rate)

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        self._require_fit()
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise UsageError(
                f"expected {self.n_features_} features, got shape {X.shape}")
        fl = self._flat
        margin = _kernels.predict_margin(fl.feature, fl.threshold, fl.left, fl.right,
                                         fl.value, fl.roots, fl.coeffs, X)
        return margin + self.const_

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Probability of the positive class per row."""
        return sigmoid(self.predict_margin(X))

    def to_dict(self) -> dict:
        self._require_fit()
        return {
            "kind": "gradient-boosted-trees",
            "config": asdict(self.config),
            "const": self.const_,
            "n_features": self.n_features_,
            "trees": [
                {
                    "feature": [int(v) for v in t.feature],
                    "threshold": [float(v) for v in t.threshold],
                    "left": [int(v) for v in t.left],
                    "right": [int(v) for v in t.right],
                    "cover": [float(v) for v in t.cover],
                    "value": [float(v) for v in t.value],
                }
                for t in self.trees_
            ],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "GradientBoostedTrees":
        try:
            model = cls(TrainConfig(**doc["config"]))
            model.const_ = float(doc["const"])
            model.n_features_ = int(doc["n_features"])
            model.trees_ = [
                Tree(
                    feature=np.asarray(t["feature"], dtype=np.int32),
                    threshold=np.asarray(t["threshold"], dtype=np.float64),
                    left=np.asarray(t["left"], dtype=np.int32),
                    right=np.asarray(t["right"], dtype=np.int32),
                    cover=np.asarray(t["cover"], dtype=np.float64),
                    value=np.asarray(t["value"], dtype=np.float64),
                )
                for t in doc["trees"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"malformed model document: {exc}") from exc
        model._flat = _flatten(model.trees_, model.config.learning_rate)
        return model

    @classmethod
    def load(cls, path: str | Path) -> "GradientBoostedTrees":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"malformed model file {path}: {exc}") from exc
        return cls.from_dict(doc)

"""Random forest of CART trees (Gini splits, bootstrap bagging) for naming
the family of a known attack."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import envelope
from .dataset import FeatureMatrix


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf. Rows with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) class counts at each node
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                return node
            cur = node[active]
            go_left = X[active, feat[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])


def split_impurity(left_counts: np.ndarray, right_counts: np.ndarray) -> float:
    """Size-weighted Gini impurity of a candidate split (sum, not mean)."""
    total = 0.0
    for c in (left_counts, right_counts):
        n = c.sum()
        if n:
            total += n - (c.astype(np.float64) ** 2).sum() / n
    return float(total)


def best_split(X, y, n_classes, features, min_samples_leaf=1):
    """Lowest weighted-Gini split over ``features``.

    Candidates are midpoints between consecutive distinct sorted values.
    Returns ``(impurity, feature, threshold)`` or ``None`` when no feature
    can be split. Ties keep the earliest feature, then the lowest threshold.
    """
    m = X.shape[0]
    onehot = np.zeros((m, n_classes), dtype=np.float64)
    onehot[np.arange(m), y] = 1.0
    total = onehot.sum(axis=0)
    best = None
    for f in features:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = xs[:-1] < xs[1:]
        if min_samples_leaf > 1:
            pos = np.arange(1, m)
            valid &= (pos >= min_samples_leaf) & (m - pos >= min_samples_leaf)
        if not valid.any():
            continue
        lc = np.cumsum(onehot[order], axis=0)[:-1]
        rc = total - lc
        n_left = np.arange(1, m, dtype=np.float64)
        n_right = m - n_left
        imp = (n_left - (lc ** 2).sum(axis=1) / n_left) + (n_right - (rc ** 2).sum(axis=1) / n_right)
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if best is None or imp[i] < best[0]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not thr < xs[i + 1]:
                thr = xs[i]
            best = (float(imp[i]), int(f), float(thr))
    return best


def _grow_tree(X, y, n_classes, mtry, rng, max_depth, min_samples_leaf) -> DecisionTree:
    feature, threshold, left, right, counts, depth = [], [], [], [], [], []
    stack = [(np.arange(X.shape[0]), 0, -1, 0)]
    n_features = X.shape[1]
    while stack:
        idx, d, parent, side = stack.pop()
        me = len(feature)
        if parent >= 0:
            (left if side == 0 else right)[parent] = me
        node_counts = np.bincount(y[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts)
        depth.append(d)
        pure = np.count_nonzero(node_counts) <= 1
        if pure or (max_depth is not None and d >= max_depth) or len(idx) < 2 * min_samples_leaf:
            continue
        order = rng.permutation(n_features)
        sub_X, sub_y = X[idx], y[idx]
        split = best_split(sub_X, sub_y, n_classes, order[:mtry], min_samples_leaf)
        if split is None and mtry < n_features:
            # every sampled feature was constant here; fall back to the rest
            split = best_split(sub_X, sub_y, n_classes, order[mtry:], min_samples_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = sub_X[:, f] <= thr
        feature[me] = f
        threshold[me] = thr
        stack.append((idx[~mask], d + 1, me, 1))
        stack.append((idx[mask], d + 1, me, 0))
    return DecisionTree(
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(counts, dtype=np.int64).reshape(-1, n_classes),
        np.asarray(depth, dtype=np.int32),
    )


@dataclass(eq=False)
class ForestModel:
    trees: list[DecisionTree]
    class_names: list[str]
    n_features: int
    mtry: int
    seed: int
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _packed(self):
        # all trees in one set of node arrays so rows walk every tree at once
        if getattr(self, "_pack", None) is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]])
            shift = lambda a, o: np.where(a >= 0, a + o, -1)  # noqa: E731
            left = np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)])
            right = np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)])
            counts = np.vstack([t.counts for t in self.trees]).astype(np.float64)
            sums = counts.sum(axis=1, keepdims=True)
            dist = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
            self._pack = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                left, right, dist, offsets.astype(np.int64),
            )
        return self._pack

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        feature, threshold, left, right, dist, roots = self._packed()
        node = np.broadcast_to(roots, (X.shape[0], len(roots))).copy()
        while True:
            feat = feature[node]
            r, t = np.nonzero(feat >= 0)
            if r.size == 0:
                break
            cur = node[r, t]
            go_left = X[r, feat[r, t]] <= threshold[cur]
            node[r, t] = np.where(go_left, left[cur], right[cur])
        return dist[node].mean(axis=1)

    def predict(self, X) -> np.ndarray:
        # argmax keeps the first maximum: ties go to the lower class index
        proba = self.predict_proba(X)
        names = np.asarray(self.class_names, dtype=object)
        return names[np.argmax(proba, axis=1)]


def fit_forest(train: FeatureMatrix, n_trees: int = 100, mtry: int | None = None, seed: int = 0,
               class_names=None, max_depth: int | None = None,
               min_samples_leaf: int = 1) -> ForestModel:
    """Bagged CART forest; ``mtry`` defaults to ceil(sqrt(n_features))."""
    if train.n_rows == 0:
        raise ValueError("empty training set")
    if train.labels is None:
        raise ValueError("forest training needs labels")
    names = list(class_names) if class_names is not None else train.class_names
    index = {c: i for i, c in enumerate(names)}
    missing = set(train.class_names) - set(index)
    if missing:
        raise ValueError(f"training labels absent from class_names: {sorted(missing)}")
    y = np.asarray([index[c] for c in train.labels], dtype=np.int64)
    X = train.values
    n, d = X.shape
    if mtry is None:
        mtry = max(1, math.ceil(math.sqrt(d)))
    mtry = min(mtry, d)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[boot], y[boot], len(names), mtry, rng, max_depth, min_samples_leaf))
    return ForestModel(trees, names, d, mtry, seed, max_depth, min_samples_leaf)


def predict(model: ForestModel, row) -> str:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("predict expects a single feature vector")
    return str(model.predict(row[None, :])[0])


def predict_proba(model: ForestModel, row) -> dict[str, float]:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("predict_proba expects a single feature vector")
    p = model.predict_proba(row[None, :])[0]
    return dict(zip(model.class_names, map(float, p)))


def extend_classes(model: ForestModel, new_train: FeatureMatrix) -> ForestModel:
    """Full refit on ``new_train``; new classes are appended after the old ones."""
    if new_train.n_rows == 0:
        raise ValueError("empty training set")
    names = list(model.class_names)
    names += [c for c in new_train.class_names if c not in names]
    return fit_forest(new_train, model.n_trees, model.mtry, model.seed, names,
                      model.max_depth, model.min_samples_leaf)


# -- serialization ----------------------------------------------------------


def to_bytes(model: ForestModel) -> bytes:
    sizes = np.asarray([t.n_nodes for t in model.trees], dtype=np.int64)
    cat = lambda attr: np.concatenate([getattr(t, attr) for t in model.trees])  # noqa: E731
    meta = {
        "class_names": list(model.class_names),
        "n_features": model.n_features,
        "mtry": model.mtry,
        "seed": model.seed,
        "max_depth": model.max_depth,
        "min_samples_leaf": model.min_samples_leaf,
    }
    arrays = {
        "sizes": sizes,
        "feature": cat("feature"),
        "threshold": cat("threshold"),
        "left": cat("left"),
        "right": cat("right"),
        "counts": np.vstack([t.counts for t in model.trees]),
        "depth": cat("depth"),
    }
    return envelope.pack("forest", meta, arrays)


def from_bytes(blob: bytes) -> ForestModel:
    kind, meta, a = envelope.unpack(blob)
    if kind != "forest":
        raise envelope.EnvelopeError(f"not a forest blob: {kind}")
    trees = []
    start = 0
    for size in a["sizes"]:
        sl = slice(start, start + int(size))
        trees.append(DecisionTree(a["feature"][sl], a["threshold"][sl], a["left"][sl],
                                  a["right"][sl], a["counts"][sl], a["depth"][sl]))
        start += int(size)
    return ForestModel(trees, meta["class_names"], meta["n_features"], meta["mtry"],
                       meta["seed"], meta["max_depth"], meta["min_samples_leaf"])

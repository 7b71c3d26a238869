"""One-class detectors (isolation forest, LOF, external plug-in) and the
mean - 3 sigma score threshold.

Every detector reports a *normality* score: larger means more like the
training class. Isolation-forest anomaly scores and LOF ratios grow with
abnormality, so they are negated here; a row is an outlier iff its score
falls strictly below the threshold.
"""

from __future__ import annotations

import importlib
import math
import pickle
from dataclasses import asdict, dataclass, field

import numpy as np

from . import envelope
from .dataset import FeatureMatrix

ISOLATION_FOREST = "isolation_forest"
LOF = "lof"
EXTERNAL = "external"
KINDS = (ISOLATION_FOREST, LOF, EXTERNAL)

INLIER = "Inlier"
OUTLIER = "Outlier"

# added to the mean reachability distance so duplicate points keep finite density
LRD_EPS = 1e-10


@dataclass(frozen=True)
class DetectorSpec:
    kind: str = ISOLATION_FOREST
    n_trees: int = 100
    subsample_size: int = 256
    k_neighbors: int = 20
    seed: int = 0
    # "package.module:factory" for kind == external
    plugin: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.subsample_size < 2:
            raise ValueError("subsample_size must be >= 2")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.kind == EXTERNAL and not self.plugin:
            raise ValueError("external detectors need a plugin path")


@dataclass(frozen=True)
class ScoreThreshold:
    mean: float
    std_dev: float
    th: float


def fit_threshold(training_scores) -> ScoreThreshold:
    """mean - 3 * population standard deviation of the training scores."""
    s = np.asarray(training_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("need at least one training score")
    mean = float(s.mean())
    std = float(s.std())
    return ScoreThreshold(mean, std, mean - 3.0 * std)


# -- isolation forest -------------------------------------------------------


def average_path_length(n) -> np.ndarray:
    """Expected path length of an unsuccessful BST search over ``n`` keys."""
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    two = n == 2
    big = n > 2
    out[two] = 1.0
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + np.euler_gamma) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass
class _IsolationForest:
    # flat node arrays over all trees; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_path: np.ndarray
    roots: np.ndarray
    norm: float

    def anomaly(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.broadcast_to(self.roots, (n, len(self.roots))).copy()
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            r, t = np.nonzero(active)
            cur = node[r, t]
            go_left = X[r, feat[r, t]] < self.threshold[cur]
            node[r, t] = np.where(go_left, self.left[cur], self.right[cur])
        depth = self.leaf_path[node].mean(axis=1)
        return np.power(2.0, -depth / self.norm)


def _grow_itree(X, rng, height_limit, nodes):
    feature, threshold, left, right, leaf_path = nodes
    root = len(feature)
    stack = [(np.arange(X.shape[0]), 0, None, None)]
    while stack:
        idx, depth, parent, side = stack.pop()
        me = len(feature)
        if parent is not None:
            (left if side == 0 else right)[parent] = me
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if len(idx) <= 1 or depth >= height_limit or splittable.size == 0:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_path.append(depth + float(average_path_length([len(idx)])[0]))
            continue
        q = int(rng.choice(splittable))
        while True:
            p = float(rng.uniform(lo[q], hi[q]))
            mask = sub[:, q] < p
            if 0 < mask.sum() < len(idx):
                break
        feature.append(q)
        threshold.append(p)
        left.append(-1)
        right.append(-1)
        leaf_path.append(0.0)
        stack.append((idx[~mask], depth + 1, me, 1))
        stack.append((idx[mask], depth + 1, me, 0))
    return root


def _fit_iforest_backend(X: np.ndarray, spec: DetectorSpec) -> _IsolationForest:
    rng = np.random.default_rng(spec.seed)
    n = X.shape[0]
    psi = min(spec.subsample_size, n)
    height_limit = math.ceil(math.log2(psi)) if psi > 1 else 0
    nodes = ([], [], [], [], [])
    roots = []
    for _ in range(spec.n_trees):
        sample = rng.choice(n, size=psi, replace=False)
        roots.append(_grow_itree(X[sample], rng, height_limit, nodes))
    feature, threshold, left, right, leaf_path = nodes
    c = float(average_path_length([psi])[0])
    return _IsolationForest(
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(leaf_path, dtype=np.float64),
        np.asarray(roots, dtype=np.int32),
        c if c > 0 else 1.0,
    )


# -- local outlier factor ---------------------------------------------------


def _knn(Q: np.ndarray, X: np.ndarray, k: int, exclude_self: bool):
    """k nearest rows of X for each row of Q; distance ties go to the lower index."""
    n = X.shape[0]
    chunk = max(1, 2_000_000 // max(1, n * X.shape[1]))
    idx_out = np.empty((Q.shape[0], k), dtype=np.int64)
    dist_out = np.empty((Q.shape[0], k), dtype=np.float64)
    for start in range(0, Q.shape[0], chunk):
        q = Q[start:start + chunk]
        d = np.sqrt(((q[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
        if exclude_self:
            rows = np.arange(len(q))
            d[rows, start + rows] = np.inf
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        idx_out[start:start + len(q)] = order
        dist_out[start:start + len(q)] = np.take_along_axis(d, order, axis=1)
    return idx_out, dist_out


@dataclass
class _LocalOutlierFactor:
    X: np.ndarray
    k: int
    k_distance: np.ndarray
    lrd: np.ndarray

    def _lof(self, idx, dist, own_lrd=None):
        reach = np.maximum(self.k_distance[idx], dist)
        lrd_q = 1.0 / (reach.mean(axis=1) + LRD_EPS) if own_lrd is None else own_lrd
        return self.lrd[idx].mean(axis=1) / lrd_q

    def lof(self, Q: np.ndarray) -> np.ndarray:
        idx, dist = _knn(Q, self.X, self.k, exclude_self=False)
        return self._lof(idx, dist)


def _fit_lof_backend(X: np.ndarray, spec: DetectorSpec):
    k = spec.k_neighbors
    idx, dist = _knn(X, X, k, exclude_self=True)
    k_distance = dist[:, -1].copy()
    reach = np.maximum(k_distance[idx], dist)
    lrd = 1.0 / (reach.mean(axis=1) + LRD_EPS)
    model = _LocalOutlierFactor(X.copy(), k, k_distance, lrd)
    train_lof = model._lof(idx, dist, own_lrd=lrd)
    return model, train_lof


# -- fitted model -----------------------------------------------------------


@dataclass(eq=False)
class OccModel:
    spec: DetectorSpec
    backend: object
    threshold: ScoreThreshold
    training_scores: np.ndarray
    n_features: int = field(default=0)

    def score_samples(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.spec.kind == ISOLATION_FOREST:
            return -self.backend.anomaly(X)
        if self.spec.kind == LOF:
            return -self.backend.lof(X)
        return np.asarray(self.backend.score_samples(X), dtype=np.float64)

    def predict(self, X) -> np.ndarray:
        """Boolean outlier mask."""
        return self.score_samples(X) < self.threshold.th


def _as_array(train) -> np.ndarray:
    X = train.values if isinstance(train, FeatureMatrix) else np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training set")
    return X


def fit_iforest(train, spec: DetectorSpec) -> OccModel:
    X = _as_array(train)
    backend = _fit_iforest_backend(X, spec)
    scores = -backend.anomaly(X)
    return OccModel(spec, backend, fit_threshold(scores), scores, X.shape[1])


def fit_lof(train, spec: DetectorSpec) -> OccModel:
    X = _as_array(train)
    if X.shape[0] <= spec.k_neighbors:
        raise ValueError(
            f"LOF needs more than k_neighbors={spec.k_neighbors} rows, got {X.shape[0]}"
        )
    backend, train_lof = _fit_lof_backend(X, spec)
    scores = -train_lof
    return OccModel(spec, backend, fit_threshold(scores), scores, X.shape[1])


def load_plugin(path: str):
    module, _, attr = path.partition(":")
    if not attr:
        raise ValueError(f"plugin path must look like 'module:factory', got {path!r}")
    return getattr(importlib.import_module(module), attr)


def fit_external(train, spec: DetectorSpec) -> OccModel:
    """Fit a plug-in detector.

    The plug-in is a callable ``factory(X, spec)`` returning an object with
    ``score_samples(X) -> array`` where larger means more normal. It must be
    picklable if the model is to be serialized.
    """
    X = _as_array(train)
    backend = load_plugin(spec.plugin)(X, spec)
    scores = np.asarray(backend.score_samples(X), dtype=np.float64)
    return OccModel(spec, backend, fit_threshold(scores), scores, X.shape[1])


def fit_detector(train, spec: DetectorSpec) -> OccModel:
    if spec.kind == ISOLATION_FOREST:
        return fit_iforest(train, spec)
    if spec.kind == LOF:
        return fit_lof(train, spec)
    return fit_external(train, spec)


def score(model: OccModel, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("score expects a single feature vector")
    return float(model.score_samples(row[None, :])[0])


def classify(model: OccModel, row) -> str:
    # ties at the threshold count as inliers
    return OUTLIER if score(model, row) < model.threshold.th else INLIER


# -- serialization ----------------------------------------------------------


def to_bytes(model: OccModel) -> bytes:
    meta = {
        "spec": asdict(model.spec),
        "threshold": asdict(model.threshold),
        "n_features": model.n_features,
    }
    arrays = {"training_scores": model.training_scores}
    b = model.backend
    if model.spec.kind == ISOLATION_FOREST:
        meta["norm"] = b.norm
        arrays.update(feature=b.feature, threshold=b.threshold, left=b.left,
                      right=b.right, leaf_path=b.leaf_path, roots=b.roots)
    elif model.spec.kind == LOF:
        meta["k"] = b.k
        arrays.update(X=b.X, k_distance=b.k_distance, lrd=b.lrd)
    else:
        arrays["pickle"] = np.frombuffer(pickle.dumps(b), dtype=np.uint8)
    return envelope.pack(f"occ/{model.spec.kind}", meta, arrays)


def from_bytes(blob: bytes) -> OccModel:
    kind, meta, a = envelope.unpack(blob)
    if not kind.startswith("occ/"):
        raise envelope.EnvelopeError(f"not a detector blob: {kind}")
    spec = DetectorSpec(**meta["spec"])
    if spec.kind == ISOLATION_FOREST:
        backend = _IsolationForest(a["feature"], a["threshold"], a["left"], a["right"],
                                   a["leaf_path"], a["roots"], meta["norm"])
    elif spec.kind == LOF:
        backend = _LocalOutlierFactor(a["X"], meta["k"], a["k_distance"], a["lrd"])
    else:
        backend = pickle.loads(a["pickle"].tobytes())
    return OccModel(spec, backend, ScoreThreshold(**meta["threshold"]),
                    a["training_scores"], meta["n_features"])

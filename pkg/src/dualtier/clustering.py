"""Density clustering of accumulated unknown attacks and purity scoring of
the largest cluster."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureMatrix

NOISE = -1


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size and self.labels.max() >= 0 else 0

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_clusters)


@dataclass(frozen=True)
class DbscanParams:
    eps: float | None = None  # None: median distance to the min_pts-th neighbour
    min_pts: int = 5

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class DpcParams:
    dc: float | None = None  # None: 2% quantile of pairwise distances
    n_peaks: int | None = 3
    rho_min: float | None = None
    delta_min: float | None = None

    def __post_init__(self):
        if self.dc is not None and not self.dc > 0:
            raise ValueError("dc must be positive")
        thresholds = self.rho_min is not None or self.delta_min is not None
        if self.n_peaks is None and not thresholds:
            raise ValueError("give n_peaks or (rho_min, delta_min)")


@dataclass(frozen=True)
class ClusterQuality:
    d: int
    n: int
    t_n: int
    dominant: str
    psl1: float
    psl2: float
    pslc: float

    def as_dict(self) -> dict:
        return {"dominant": self.dominant, "d": self.d, "n": self.n, "t_n": self.t_n,
                "psl1": self.psl1, "psl2": self.psl2, "pslc": self.pslc}


def _points(points) -> np.ndarray:
    X = points.values if isinstance(points, FeatureMatrix) else np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be 2-D")
    return X


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distances from explicit differences (no Gram-matrix cancellation)."""
    n, d = X.shape
    out = np.empty((n, n))
    chunk = max(1, 4_000_000 // max(1, n * d))
    for s in range(0, n, chunk):
        diff = X[s:s + chunk, None, :] - X[None, :, :]
        out[s:s + chunk] = np.sqrt((diff ** 2).sum(axis=2))
    return out


def default_eps(X: np.ndarray, min_pts: int) -> float:
    """Median over points of the distance to the ``min_pts``-th other point."""
    n = X.shape[0]
    if n < 2:
        return 1.0
    k = min(min_pts, n - 1)
    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    eps = float(np.median(kth))
    if eps > 0:
        return eps
    positive = D[np.isfinite(D) & (D > 0)]
    return float(positive.min()) if positive.size else 1.0


def dbscan(points, params: DbscanParams = DbscanParams()) -> ClusterAssignment:
    """Classic DBSCAN, scanned in row order.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. A border point joins the first cluster that reaches it.
    """
    X = _points(points)
    n = X.shape[0]
    if n == 0:
        raise ValueError("no points to cluster")
    eps = params.eps if params.eps is not None else default_eps(X, params.min_pts)
    within = pairwise_distances(X) <= eps
    neighbours = [np.flatnonzero(row) for row in within]
    core = np.asarray([len(nb) >= params.min_pts for nb in neighbours])
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return ClusterAssignment(labels)


def dpc_density(D: np.ndarray, dc: float) -> np.ndarray:
    """rho_i = |{j : d(i, j) < dc}| (the point itself counts)."""
    return (D < dc).sum(axis=1)


def dpc(points, params: DpcParams = DpcParams()) -> ClusterAssignment:
    """Density-peak clustering with automatic peak selection.

    Points are ranked by density (ties: lower row first); delta is the
    distance to the nearest higher-ranked point, or the largest distance for
    the top-ranked one. Peaks are the top ``n_peaks`` by rho * delta, or
    those passing (rho_min, delta_min). The top-ranked point is always a
    peak. Others inherit the cluster of their nearest higher-ranked point.
    """
    X = _points(points)
    n = X.shape[0]
    if n < 2:
        raise ValueError("dpc needs at least two points")
    D = pairwise_distances(X)
    if not D.any():
        return ClusterAssignment(np.zeros(n, dtype=np.int64))
    rho, delta, parent, order = dpc_decision_graph(D, params.dc)
    gamma = rho * delta
    if params.rho_min is not None or params.delta_min is not None:
        rmin = params.rho_min if params.rho_min is not None else -np.inf
        dmin = params.delta_min if params.delta_min is not None else -np.inf
        peaks = set(np.flatnonzero((rho >= rmin) & (delta >= dmin)).tolist())
    else:
        ranked = np.argsort(-gamma, kind="stable")
        peaks = set(ranked[:min(params.n_peaks, n)].tolist())
    peaks.add(int(order[0]))
    labels = np.full(n, NOISE, dtype=np.int64)
    next_id = 0
    for i in order:
        if i in peaks:
            labels[i] = next_id
            next_id += 1
        else:
            labels[i] = labels[parent[i]]
    return ClusterAssignment(labels)


def dpc_decision_graph(D: np.ndarray, dc: float | None = None):
    """(rho, delta, nearest higher-ranked point, density order)."""
    n = D.shape[0]
    if dc is None:
        upper = D[np.triu_indices(n, 1)]
        dc = float(np.quantile(upper, 0.02))
        if dc <= 0:
            dc = float(upper[upper > 0].min())
    rho = dpc_density(D, dc).astype(np.float64)
    order = np.lexsort((np.arange(n), -rho))
    delta = np.empty(n)
    parent = np.full(n, -1, dtype=np.int64)
    delta[order[0]] = D[order[0]].max()
    for r in range(1, n):
        i = order[r]
        higher = order[:r]
        j = int(np.argmin(D[i, higher]))
        delta[i] = D[i, higher[j]]
        parent[i] = higher[j]
    return rho, delta, parent, order


def largest_cluster(assignment: ClusterAssignment) -> tuple[int, np.ndarray]:
    """Biggest non-noise cluster; ties go to the lower cluster id."""
    if assignment.n_clusters == 0:
        raise ValueError("no clusters: every point is noise")
    cid = int(np.argmax(assignment.sizes()))
    return cid, np.flatnonzero(assignment.labels == cid)


def pslc(psl1: float, psl2: float) -> float:
    """Harmonic mean of the purity and coverage of the largest cluster."""
    total = psl1 + psl2
    return 0.0 if total == 0 else 2.0 * psl1 * psl2 / total


def cluster_quality(member_truth, batch_truth) -> ClusterQuality:
    """PSL1 = d/n, PSL2 = d/T_n and their harmonic mean for one cluster.

    ``d`` is the count of the dominant true class among the members (ties:
    lexicographically smallest name), ``n`` the cluster size and ``T_n`` the
    count of that class in the whole clustered batch.
    """
    members = [str(t) for t in member_truth]
    if not members:
        raise ValueError("empty cluster")
    counts = Counter(members)
    top = max(counts.values())
    dominant = min(c for c, v in counts.items() if v == top)
    d = counts[dominant]
    t_n = sum(1 for t in batch_truth if str(t) == dominant)
    if t_n < d:
        raise ValueError("cluster members are not a subset of the batch")
    p1 = d / len(members)
    p2 = d / t_n
    return ClusterQuality(d, len(members), t_n, dominant, p1, p2, pslc(p1, p2))


def cluster_report(assignment: ClusterAssignment, truth) -> list[dict]:
    """One record per cluster: size, dominant class, PSL1/PSL2/PSLC."""
    truth = np.asarray([str(t) for t in truth], dtype=object)
    out = []
    for cid in range(assignment.n_clusters):
        members = truth[assignment.labels == cid]
        q = cluster_quality(members.tolist(), truth.tolist())
        out.append({"cluster": cid, "size": int(len(members)), **q.as_dict()})
    return out

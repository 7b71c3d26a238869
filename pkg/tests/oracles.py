"""Slow, loop-based reference implementations used only by the tests."""

import math

import numpy as np


def dist(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def knn(X, q, k, skip=None):
    cand = sorted((dist(q, X[j]), j) for j in range(len(X)) if j != skip)
    return cand[:k]


def lof_train(X, k):
    """LOF of every training row, neighbours taken leave-self-out."""
    n = len(X)
    nb = [knn(X, X[i], k, skip=i) for i in range(n)]
    kdist = [nb[i][-1][0] for i in range(n)]
    lrd = []
    for i in range(n):
        reach = [max(kdist[j], d) for d, j in nb[i]]
        lrd.append(1.0 / (sum(reach) / k + 1e-10))
    return [sum(lrd[j] for _, j in nb[i]) / k / lrd[i] for i in range(n)], kdist, lrd


def lof_query(X, k, Q):
    _, kdist, lrd = lof_train(X, k)
    out = []
    for q in Q:
        nb = knn(X, q, k)
        reach = [max(kdist[j], d) for d, j in nb]
        lrd_q = 1.0 / (sum(reach) / k + 1e-10)
        out.append(sum(lrd[j] for _, j in nb) / k / lrd_q)
    return out


def dbscan(X, eps, min_pts):
    """Labels from core components; a border point takes the lowest-numbered
    cluster among its core neighbours. Cluster numbers follow the smallest
    core index of each component."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    nbrs = [np.flatnonzero(np.sqrt(((X - X[i]) ** 2).sum(axis=1)) <= eps).tolist()
            for i in range(n)]
    core = [len(nbrs[i]) >= min_pts for i in range(n)]
    comp = [-1] * n
    next_id = 0
    for i in range(n):
        if not core[i] or comp[i] >= 0:
            continue
        stack = [i]
        comp[i] = next_id
        while stack:
            p = stack.pop()
            for q in nbrs[p]:
                if core[q] and comp[q] < 0:
                    comp[q] = next_id
                    stack.append(q)
        next_id += 1
    labels = list(comp)
    for i in range(n):
        if not core[i]:
            ids = [comp[j] for j in nbrs[i] if core[j]]
            labels[i] = min(ids) if ids else -1
    return labels


def same_partition(a, b):
    a, b = list(a), list(b)
    if [x == -1 for x in a] != [x == -1 for x in b]:
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if x == -1:
            continue
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def dpc_rho(X, dc):
    return [sum(dist(X[i], X[j]) < dc for j in range(len(X))) for i in range(len(X))]


def gini_split_bruteforce(X, y, n_classes):
    """Minimum weighted Gini count over every feature and midpoint."""
    X = np.asarray(X)
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = X[:, f] <= thr
            imp = 0.0
            for side in (left, ~left):
                cnt = np.bincount(y[side], minlength=n_classes)
                m = cnt.sum()
                imp += m - (cnt ** 2).sum() / m
            if best is None or imp < best - 1e-12:
                best = imp
    return best


def hand_binary(tp, tn, fp, fn):
    acc = 100.0 * (tp + tn) / (tp + tn + fp + fn)
    p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return acc, p, r, f


class CentroidScorer:
    """Plug-in detector: negative distance to the training mean."""

    def __init__(self, X, spec):
        self.center = np.asarray(X).mean(axis=0)

    def score_samples(self, X):
        return -np.linalg.norm(np.asarray(X) - self.center, axis=1)


def centroid_factory(X, spec):
    return CentroidScorer(X, spec)

"""Seeded Gaussian-blob traffic for tests, toy runs and acceptance checks."""

from __future__ import annotations

import numpy as np

from .dataset import FeatureMatrix


def blob_centers(n_blobs: int, n_features: int, rng, box: float = 10.0,
                 min_separation: float = 4.0, max_tries: int = 10_000) -> np.ndarray:
    centers = []
    for _ in range(max_tries):
        c = rng.uniform(0.0, box, size=n_features)
        if all(np.linalg.norm(c - o) >= min_separation for o in centers):
            centers.append(c)
            if len(centers) == n_blobs:
                return np.asarray(centers)
    raise RuntimeError("could not place blob centers; widen the box or lower the separation")


def make_blobs(class_sizes: dict[str, int], n_features: int = 6, spread: float = 0.5,
               seed: int = 0, shuffle: bool = True, **center_kw) -> FeatureMatrix:
    """One isotropic Gaussian blob per class.

    >>> m = make_blobs({"normal": 10, "dos": 5}, seed=1)
    >>> m.n_rows, sorted(m.class_histogram().items())
    (15, [('dos', 5), ('normal', 10)])
    """
    rng = np.random.default_rng(seed)
    names = list(class_sizes)
    centers = blob_centers(len(names), n_features, rng, **center_kw)
    parts, labels = [], []
    for name, c in zip(names, centers):
        n = class_sizes[name]
        parts.append(c + spread * rng.standard_normal((n, n_features)))
        labels += [name] * n
    X = np.vstack(parts)
    y = np.asarray(labels, dtype=object)
    if shuffle:
        perm = rng.permutation(len(y))
        X, y = X[perm], y[perm]
    return FeatureMatrix(X, [f"f{j}" for j in range(n_features)], y)

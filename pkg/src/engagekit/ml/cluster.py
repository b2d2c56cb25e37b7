"""k-means with k-means++ seeding and best-of-restarts selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DegenerateInput


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia: float


def kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = kernels.sq_dists(X, centers[:1])[:, 0]
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(n)
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centers[c] = X[i]
        d2 = np.minimum(d2, kernels.sq_dists(X, centers[c:c + 1])[:, 0])
    return centers


def kmeans(points, k: int, seed=0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations to an assignment fixpoint, keeping the lowest-inertia restart."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if np.unique(X, axis=0).shape[0] < k:
        raise DegenerateInput(f"need at least {k} distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = kmeans_pp(X, k, rng)
        centers, labels, inertia, _ = kernels.lloyd(X, init, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centers, labels, float(inertia))
    return best

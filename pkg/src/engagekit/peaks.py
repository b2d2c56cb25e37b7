"""Local-maximum peak picking with a minimum-separation rule."""
import numpy as np


def local_maxima(x):
    """Indices of strict local maxima (endpoints excluded)."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        return np.empty(0, dtype=np.int64)
    mid = x[1:-1]
    return np.flatnonzero((mid > x[:-2]) & (mid > x[2:])) + 1


def select_separated(indices, amplitudes, min_distance):
    """Greedy selection: larger amplitude first, earlier index on ties.

    A candidate survives only if it lies at least ``min_distance`` samples
    from every peak already kept. Returns kept indices in ascending order.
    """
    indices = np.asarray(indices, dtype=np.int64)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if indices.size == 0:
        return indices
    order = np.lexsort((indices, -amplitudes))
    kept = []
    for i in order:
        if all(abs(indices[i] - k) >= min_distance for k in kept):
            kept.append(indices[i])
    return np.sort(np.array(kept, dtype=np.int64))

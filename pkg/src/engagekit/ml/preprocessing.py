"""Standard scaling, SMOTE oversampling and k-NN imputation."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import EmptyMatrix, MinorityTooSmall, NoCompleteVectors


@dataclass(frozen=True)
class ScalerModel:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # columns whose std was replaced by 1

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mean).tobytes())
        h.update(np.ascontiguousarray(self.std).tobytes())
        return h.hexdigest()[:16]


def fit_scaler(train_matrix) -> ScalerModel:
    X = np.asarray(train_matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("cannot fit a scaler on an empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # identical values can still leave a rounding-level std; treat those as constant too
    constant = std <= 1e-12 * np.abs(X).max(axis=0)
    std = np.where(constant, 1.0, std)
    return ScalerModel(mean, std, constant)


def apply_scaler(model: ScalerModel, matrix) -> np.ndarray:
    return (np.asarray(matrix, dtype=float) - model.mean) / model.std


@dataclass(frozen=True)
class SmoteInfo:
    """Provenance of each synthetic row (indices into the input arrays)."""
    base: np.ndarray
    neighbor: np.ndarray
    u: np.ndarray
    minority_label: object


def _neighbors(points, k):
    d2 = kernels.sq_dists(points, points)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(train_X, train_y, k: int = 5, seed=0, return_info: bool = False):
    """Oversample the minority class to exact parity with the majority.

    Originals come first, in their input order; synthetic rows are appended.
    """
    X = np.asarray(train_X, dtype=float)
    y = np.asarray(train_y)
    classes, counts = np.unique(y, return_counts=True)
    empty = SmoteInfo(np.empty(0, int), np.empty(0, int), np.empty(0), None)
    if classes.size < 2 or counts[0] == counts[1]:
        return (X.copy(), y.copy(), empty) if return_info else (X.copy(), y.copy())
    minority = classes[np.argmin(counts)]
    min_idx = np.flatnonzero(y == minority)
    if min_idx.size < 2:
        raise MinorityTooSmall(f"minority class {minority!r} has {min_idx.size} sample(s); need 2")
    k = min(k, min_idx.size - 1)
    nn = _neighbors(X[min_idx], k)
    n_new = int(counts.max() - counts.min())
    rng = np.random.default_rng(seed)
    base_local = rng.integers(0, min_idx.size, size=n_new)
    pick = rng.integers(0, k, size=n_new)
    u = rng.random(n_new)
    nb_local = nn[base_local, pick]
    base, neighbor = min_idx[base_local], min_idx[nb_local]
    synth = X[base] + u[:, None] * (X[neighbor] - X[base])
    X_aug = np.vstack([X, synth])
    y_aug = np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)])
    if return_info:
        return X_aug, y_aug, SmoteInfo(base, neighbor, u, minority)
    return X_aug, y_aug


class KnnImputer:
    """Fill missing voice blocks from the k nearest complete rows.

    Distances use the always-present biofeedback columns only.
    """

    def __init__(self, k: int = 5):
        self.k = k
        self.donor_bio = None
        self.donor_voice = None
        self.donor_index = None

    def fit(self, bio, voice, missing, index=None):
        bio = np.asarray(bio, dtype=float)
        missing = np.asarray(missing, dtype=bool)
        complete = ~missing
        if not complete.any():
            raise NoCompleteVectors("no row has complete voice features")
        self.donor_bio = bio[complete]
        self.donor_voice = np.asarray(voice, dtype=float)[complete]
        idx = np.arange(len(bio)) if index is None else np.asarray(index)
        self.donor_index = idx[complete]
        return self

    def transform(self, bio, voice, missing):
        """Return ``(filled_voice, imputed_mask)``."""
        bio = np.asarray(bio, dtype=float)
        voice = np.array(voice, dtype=float, copy=True)
        missing = np.asarray(missing, dtype=bool)
        if missing.any():
            d2 = kernels.sq_dists(bio[missing], self.donor_bio)
            k = min(self.k, self.donor_bio.shape[0])
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            voice[missing] = self.donor_voice[nn].mean(axis=1)
        return voice, missing.copy()


def knn_impute(bio, voice, missing, k: int = 5):
    """Impute within one dataset; returns ``(filled_voice, imputed_mask)``."""
    return KnnImputer(k).fit(bio, voice, missing).transform(bio, voice, missing)

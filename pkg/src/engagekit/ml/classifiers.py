"""From-scratch binary classifiers: Gaussian NB, C4.5-style tree, random forest, RBF SVM, MLP.

All estimators share ``fit(X, y) -> self`` / ``predict(X)`` and emit hard
labels from the two classes seen in training. ``to_arrays`` /
``from_arrays`` give a flat array representation used for serialization.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import NonFiniteFeature, SingleClassTraining
from .preprocessing import ScalerModel, apply_scaler

KINDS = ("NB", "DTree", "SVM", "RF", "MLP")
FORMAT_VERSION = 1


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X shape {X.shape} does not match {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training matrix contains non-finite values")
    classes = np.unique(y)
    if classes.size != 2:
        raise SingleClassTraining(f"binary training needs two classes, got {classes.tolist()}")
    return X, (y == classes[1]).astype(np.int64), classes


class _Binary:
    classes_: np.ndarray

    def predict(self, X):
        return self.classes_[self._predict01(np.asarray(X, dtype=float))]


class GaussianNB(_Binary):
    def __init__(self, var_smoothing: float = 1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X, y01, self.classes_ = _check_xy(X, y)
        eps = self.var_smoothing * X.var(axis=0).max()
        self.theta_ = np.array([X[y01 == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.array([X[y01 == c].var(axis=0) for c in (0, 1)]) + eps
        if eps == 0:
            self.var_ = np.maximum(self.var_, np.finfo(float).tiny)
        self.log_prior_ = np.log(np.bincount(y01, minlength=2) / y01.size)
        return self

    def joint_log_likelihood(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], 2))
        for c in range(2):
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            out[:, c] = self.log_prior_[c] + ll
        return out

    def _predict01(self, X):
        return np.argmax(self.joint_log_likelihood(X), axis=1)

    def to_arrays(self):
        return {"classes": self.classes_, "theta": self.theta_, "var": self.var_, "log_prior": self.log_prior_}

    @classmethod
    def from_arrays(cls, arrays, hyper):
        m = cls(**hyper)
        m.classes_, m.theta_, m.var_, m.log_prior_ = (arrays[k] for k in ("classes", "theta", "var", "log_prior"))
        return m


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_pos: np.ndarray
    n_total: np.ndarray

    def leaf_positive(self):
        # ties go to class 0
        return (2 * self.n_pos > self.n_total).astype(np.int64)

    def predict01(self, X):
        leaves = kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)
        return self.leaf_positive()[leaves]

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())


def grow_tree(X, y01, sample_idx, max_depth=None, min_leaf=1, max_features=None, gain_ratio=True, seed=0):
    d = X.shape[1]
    arrays = kernels.build_tree(
        np.ascontiguousarray(X, dtype=float), np.ascontiguousarray(y01, dtype=np.int64),
        np.ascontiguousarray(sample_idx, dtype=np.int64),
        -1 if max_depth is None else int(max_depth), int(min_leaf),
        d if max_features is None else int(max_features), bool(gain_ratio), np.uint64(seed))
    return Tree(*arrays)


class DecisionTree(_Binary):
    """C4.5-style tree: binary threshold splits chosen by gain ratio among
    candidates whose information gain is at least average."""

    def __init__(self, max_depth: Optional[int] = None, min_leaf: int = 1):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y):
        X, y01, self.classes_ = _check_xy(X, y)
        self.tree_ = grow_tree(X, y01, np.arange(X.shape[0]), self.max_depth, self.min_leaf)
        return self

    def _predict01(self, X):
        return self.tree_.predict01(X)

    def to_arrays(self):
        return {"classes": self.classes_, **{f"tree_{k}": v for k, v in vars(self.tree_).items()}}

    @classmethod
    def from_arrays(cls, arrays, hyper):
        m = cls(**hyper)
        m.classes_ = arrays["classes"]
        m.tree_ = Tree(**{k[5:]: arrays[k] for k in arrays if k.startswith("tree_")})
        return m


class RandomForest(_Binary):
    """Bagged information-gain trees with sqrt(d) features tried per node; majority vote."""

    def __init__(self, n_trees: int = 100, max_depth: Optional[int] = None, min_leaf: int = 1, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y):
        X, y01, self.classes_ = _check_xy(X, y)
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        mf = max(1, int(math.sqrt(d)))
        self.trees_ = []
        for _ in range(self.n_trees):
            boot = rng.integers(0, n, size=n)
            tseed = int(rng.integers(0, 2 ** 63 - 1))
            self.trees_.append(grow_tree(X, y01, boot, self.max_depth, self.min_leaf, mf, False, tseed))
        return self

    def votes(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return sum(t.predict01(X) for t in self.trees_)

    def _predict01(self, X):
        # ties go to class 0
        return (2 * self.votes(X) > len(self.trees_)).astype(np.int64)

    def to_arrays(self):
        out = {"classes": self.classes_, "n_nodes": np.array([len(t.feature) for t in self.trees_])}
        for k in ("feature", "threshold", "left", "right", "n_pos", "n_total"):
            out[f"trees_{k}"] = np.concatenate([getattr(t, k) for t in self.trees_])
        return out

    @classmethod
    def from_arrays(cls, arrays, hyper):
        m = cls(**hyper)
        m.classes_ = arrays["classes"]
        bounds = np.r_[0, np.cumsum(arrays["n_nodes"])]
        m.trees_ = [Tree(*(arrays[f"trees_{k}"][a:b] for k in ("feature", "threshold", "left", "right", "n_pos", "n_total")))
                    for a, b in zip(bounds[:-1], bounds[1:])]
        return m


def rbf_kernel(A, B, gamma):
    return np.exp(-gamma * kernels.sq_dists(np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(B, dtype=float)))


class SVM(_Binary):
    """Soft-margin RBF SVM trained by SMO with second-order working-set selection."""

    def __init__(self, C: float = 1.0, gamma="scale", tol: float = 1e-3, max_iter: Optional[int] = None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y01, self.classes_ = _check_xy(X, y)
        if self.gamma == "scale":
            var = X.var()
            self.gamma_ = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        else:
            self.gamma_ = float(self.gamma)
        ys = np.where(y01 == 1, 1.0, -1.0)
        K = rbf_kernel(X, X, self.gamma_)
        cap = self.max_iter or max(100_000, 100 * X.shape[0])
        alpha, b, self.n_iter_, self.converged_ = kernels.smo(K, ys, float(self.C), float(self.tol), int(cap))
        sv = alpha > 0
        self.alpha_ = alpha
        self.dual_coef_ = (alpha * ys)[sv]
        self.support_vectors_ = X[sv]
        self.intercept_ = float(b)
        return self

    def decision_function(self, X):
        if self.support_vectors_.shape[0] == 0:
            return np.full(np.asarray(X).shape[0], self.intercept_)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def _predict01(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_arrays(self):
        return {"classes": self.classes_, "dual_coef": self.dual_coef_, "support_vectors": self.support_vectors_,
                "intercept": np.array(self.intercept_), "gamma": np.array(self.gamma_)}

    @classmethod
    def from_arrays(cls, arrays, hyper):
        m = cls(**hyper)
        m.classes_ = arrays["classes"]
        m.dual_coef_ = arrays["dual_coef"]
        m.support_vectors_ = arrays["support_vectors"]
        m.intercept_ = float(arrays["intercept"])
        m.gamma_ = float(arrays["gamma"])
        return m


# ---------------------------------------------------------------------------
# multi-layer perceptron

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def mlp_forward(params, X):
    """Return hidden activations (inputs included) and the output logits."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = params[-1]
    return acts, (h @ W + b)[:, 0]


def mlp_loss_grad(params, X, y, l2: float = 0.0):
    """Mean binary cross-entropy (+ ``l2/2n * sum ||W||^2``) and its gradient."""
    n = X.shape[0]
    acts, logits = mlp_forward(params, X)
    # log(1 + e^z) - y z, written stably
    loss = np.mean(np.logaddexp(0.0, logits) - y * logits)
    loss += 0.5 * l2 / n * sum(np.sum(W * W) for W, _ in params)
    delta = ((_sigmoid(logits) - y) / n)[:, None]
    grads = [None] * len(params)
    for layer in range(len(params) - 1, -1, -1):
        W, b = params[layer]
        a = acts[layer]
        grads[layer] = (a.T @ delta + l2 / n * W, delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ W.T) * (a > 0)
    return loss, grads


class MLP(_Binary):
    """ReLU hidden layers, logistic output, mini-batch Adam on cross-entropy."""

    def __init__(self, hidden=(32,), learning_rate: float = 0.001, epochs: int = 300,
                 batch_size: int = 32, l2: float = 1e-4, seed: int = 0):
        self.hidden = tuple(hidden)
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed

    def init_params(self, d, rng):
        sizes = [d, *self.hidden, 1]
        params = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            factor = 2.0 if i == len(sizes) - 2 else 6.0
            bound = math.sqrt(factor / (fan_in + fan_out))
            params.append((rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)))
        return params

    def fit(self, X, y):
        X, y01, self.classes_ = _check_xy(X, y)
        yf = y01.astype(float)
        rng = np.random.default_rng(self.seed)
        params = self.init_params(X.shape[1], rng)
        flat = [p for pair in params for p in pair]
        m = [np.zeros_like(p) for p in flat]
        v = [np.zeros_like(p) for p in flat]
        b1, b2, eps = 0.9, 0.999, 1e-8
        step = 0
        bs = min(self.batch_size, X.shape[0])
        for _ in range(self.epochs):
            order = rng.permutation(X.shape[0])
            for start in range(0, X.shape[0], bs):
                batch = order[start:start + bs]
                _, grads = mlp_loss_grad(params, X[batch], yf[batch], self.l2)
                step += 1
                gflat = [g for pair in grads for g in pair]
                lr = self.learning_rate * math.sqrt(1 - b2 ** step) / (1 - b1 ** step)
                for i, g in enumerate(gflat):
                    m[i] = b1 * m[i] + (1 - b1) * g
                    v[i] = b2 * v[i] + (1 - b2) * g * g
                    flat[i] = flat[i] - lr * m[i] / (np.sqrt(v[i]) + eps)
                params = [(flat[2 * i], flat[2 * i + 1]) for i in range(len(params))]
        self.params_ = params
        return self

    def _predict01(self, X):
        return (mlp_forward(self.params_, X)[1] > 0).astype(np.int64)

    def to_arrays(self):
        out = {"classes": self.classes_}
        for i, (W, b) in enumerate(self.params_):
            out[f"W{i}"] = W
            out[f"b{i}"] = b
        return out

    @classmethod
    def from_arrays(cls, arrays, hyper):
        m = cls(**hyper)
        m.classes_ = arrays["classes"]
        n = sum(1 for k in arrays if k.startswith("W"))
        m.params_ = [(arrays[f"W{i}"], arrays[f"b{i}"]) for i in range(n)]
        return m


# ---------------------------------------------------------------------------
# registry, grids and the train/predict entry points

_CLASSES = {"NB": GaussianNB, "DTree": DecisionTree, "SVM": SVM, "RF": RandomForest, "MLP": MLP}
_SEEDED = {"RF", "MLP"}


def _product(**axes):
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


DEFAULT_GRIDS = {
    "NB": _product(var_smoothing=[1e-9, 1e-7]),
    "DTree": _product(max_depth=[3, 5, 10, None], min_leaf=[1, 5]),
    "SVM": _product(C=[0.1, 1, 10, 100], gamma=["scale", 0.01, 0.1]),
    "RF": _product(n_trees=[100, 300], max_depth=[None, 10]),
    "MLP": _product(hidden=[(32,), (64, 32)], learning_rate=[0.01, 0.001], epochs=[300]),
}


def make_estimator(kind: str, hyperparams: dict, seed: int = 0):
    if kind not in _CLASSES:
        raise ValueError(f"unknown classifier kind {kind!r}; choose from {KINDS}")
    hp = dict(hyperparams)
    if kind in _SEEDED:
        hp["seed"] = int(seed)
    return _CLASSES[kind](**hp)


@dataclass
class TrainedModel:
    kind: str
    hyperparams: dict
    seed: int
    estimator: object
    scaler: Optional[ScalerModel] = None
    extras: dict = field(default_factory=dict)

    @property
    def classes(self):
        return self.estimator.classes_


def train(kind: str, hyperparams: dict, X, y, seed: int = 0, scaler: Optional[ScalerModel] = None) -> TrainedModel:
    """Fit one classifier. ``scaler``, if given, is applied to ``X`` first and
    stored on the model so :func:`predict` can take unscaled rows."""
    X = np.asarray(X, dtype=float)
    if scaler is not None:
        X = apply_scaler(scaler, X)
    est = make_estimator(kind, hyperparams, seed).fit(X, y)
    return TrainedModel(kind, dict(hyperparams), int(seed), est, scaler)


def predict(model: TrainedModel, X):
    X = np.asarray(X, dtype=float)
    if model.scaler is not None:
        X = apply_scaler(model.scaler, X)
    return model.estimator.predict(X)


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, np.generic):
        return v.item()
    return v


def save_model(model: TrainedModel, directory) -> tuple:
    """Write ``model.bin`` (npz arrays) and ``model.meta.json``; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = model.estimator.to_arrays()
    if model.scaler is not None:
        arrays.update(scaler_mean=model.scaler.mean, scaler_std=model.scaler.std, scaler_constant=model.scaler.constant)
    bin_path = directory / "model.bin"
    with open(bin_path, "wb") as fh:
        np.savez(fh, **arrays)
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "hyperparams": {k: _jsonable(v) for k, v in model.hyperparams.items()},
        "seed": model.seed,
        "classes": [_jsonable(c) for c in model.classes],
        "scaler": None if model.scaler is None else {
            "mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist(),
            "fingerprint": model.scaler.fingerprint},
    }
    meta_path = directory / "model.meta.json"
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8")
    return bin_path, meta_path


def load_model(directory) -> TrainedModel:
    directory = Path(directory)
    meta = json.loads((directory / "model.meta.json").read_text(encoding="utf-8"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {meta.get('format_version')}")
    with np.load(directory / "model.bin", allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    hyper = dict(meta["hyperparams"])
    if "hidden" in hyper:
        hyper["hidden"] = tuple(hyper["hidden"])
    kind = meta["kind"]
    cls = _CLASSES[kind]
    hp = dict(hyper)
    if kind in _SEEDED:
        hp["seed"] = meta["seed"]
    est = cls.from_arrays({k: v for k, v in arrays.items() if not k.startswith("scaler_")}, hp)
    scaler = None
    if "scaler_mean" in arrays:
        scaler = ScalerModel(arrays["scaler_mean"], arrays["scaler_std"], arrays["scaler_constant"])
    return TrainedModel(kind, hyper, meta["seed"], est, scaler)

"""Classical back-ends: Minkowski K-nearest-neighbor and Gaussian naive Bayes.

Both classifiers expose probabilities over the five class codes and use
deterministic tie rules so that repeated runs and independent oracles agree
exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .dataio import N_CLASSES, read_embedding, write_embedding
from .errors import (
    DimensionMismatch,
    InsufficientData,
    InvalidArgument,
    InvalidOrder,
    MissingClass,
    NonFiniteValue,
)

LOG_2PI = float(np.log(2.0 * np.pi))


def minkowski_distance(x, y, p: float = 2.0) -> float:
    """Minkowski distance (sum |x_i - y_i|^p)^(1/p); p=2 is Euclidean."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    if p < 1:
        raise InvalidOrder(f"Minkowski order must be >= 1, got {p}")
    return float(np.sum(np.abs(x - y) ** p) ** (1.0 / p))


def _check_training(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X is {X.shape}, y is {y.shape}")
    if not np.isfinite(X).all():
        raise NonFiniteValue("training matrix holds non-finite values")
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidArgument("labels must be class codes 0..4")
    return X, y


def _as_queries(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(f"queries must be N x {n_features}, got {X.shape}")
    return X


class KnnClassifier(BaseEstimator, ClassifierMixin):
    """Majority-vote K-nearest-neighbor classifier under a Minkowski metric.

    Parameters
    ----------
    k : int
        Number of neighbors (default 5).
    p : float
        Minkowski order, >= 1 (default 2, Euclidean).

    Ties are deterministic: neighbors are ranked by ascending distance with
    distance ties broken by lower training-row index; vote ties are broken by
    the smaller summed distance of the tied class's voters, then by lower
    class code.
    """

    def __init__(self, k: int = 5, p: float = 2.0):
        self.k = k
        self.p = p

    def fit(self, X, y):
        X, y = _check_training(X, y)
        if self.k < 1:
            raise InvalidArgument(f"k must be >= 1, got {self.k}")
        if self.p < 1:
            raise InvalidOrder(f"Minkowski order must be >= 1, got {self.p}")
        if X.shape[0] < self.k:
            raise InsufficientData(f"{X.shape[0]} training rows < k={self.k}")
        self.X_ = X
        self.y_ = y
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = X.shape[1]
        return self

    def _neighbors(self, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dist = np.sum(np.abs(self.X_ - query) ** self.p, axis=1) ** (1.0 / self.p)
        order = np.argsort(dist, kind="stable")[: self.k]
        return dist, order

    def _check_is_fitted(self):
        if not hasattr(self, "X_"):
            raise NotFittedError("KnnClassifier is not fitted")

    def predict_proba(self, X) -> np.ndarray:
        """Vote fractions over the five classes; every entry is a multiple of 1/k."""
        self._check_is_fitted()
        queries = _as_queries(X, self.n_features_in_)
        out = np.zeros((queries.shape[0], N_CLASSES))
        for i, q in enumerate(queries):
            _, nn = self._neighbors(q)
            out[i] = np.bincount(self.y_[nn], minlength=N_CLASSES) / self.k
        return out

    def predict(self, X) -> np.ndarray:
        self._check_is_fitted()
        queries = _as_queries(X, self.n_features_in_)
        labels = np.empty(queries.shape[0], dtype=np.int64)
        for i, q in enumerate(queries):
            dist, nn = self._neighbors(q)
            votes = np.bincount(self.y_[nn], minlength=N_CLASSES)
            tied = np.flatnonzero(votes == votes.max())
            if tied.size == 1:
                labels[i] = tied[0]
            else:
                nn_labels = self.y_[nn]
                nn_dist = dist[nn]
                labels[i] = min(
                    tied, key=lambda c: (nn_dist[nn_labels == c].sum(), c)
                )
        return labels


class GaussianBackend(BaseEstimator, ClassifierMixin):
    """Gaussian naive-Bayes back-end with diagonal class covariances.

    Parameters
    ----------
    var_floor : float or None
        Elementwise lower bound on class variances. None derives
        ``1e-9 * mean(pooled feature variances)`` from the training data.
    priors : {"empirical", "uniform"}
        Class priors: empirical frequencies (default) or uniform over the
        classes present in training.

    Posteriors are computed in log space and normalized with log-sum-exp;
    classes absent from training receive probability exactly zero.
    """

    def __init__(self, var_floor: float | None = None, priors: str = "empirical"):
        self.var_floor = var_floor
        self.priors = priors

    def fit(self, X, y):
        X, y = _check_training(X, y)
        if self.priors not in ("empirical", "uniform"):
            raise InvalidArgument(f"priors must be empirical or uniform, got {self.priors!r}")
        if self.var_floor is not None and self.var_floor <= 0:
            raise InvalidArgument(f"var_floor must be > 0, got {self.var_floor}")
        classes, counts = np.unique(y, return_counts=True)
        if (counts < 2).any():
            few = classes[counts < 2].tolist()
            raise MissingClass(f"classes {few} have fewer than 2 samples")

        n, k = X.shape
        if self.var_floor is None:
            pooled = float(X.var(axis=0).mean())
            floor = 1e-9 * pooled if pooled > 0 else 1e-12
        else:
            floor = float(self.var_floor)

        theta = np.zeros((N_CLASSES, k))
        var = np.full((N_CLASSES, k), floor)
        prior = np.zeros(N_CLASSES)
        for c, n_c in zip(classes, counts):
            block = X[y == c]
            theta[c] = block.mean(axis=0)
            var[c] = np.maximum(block.var(axis=0), floor)  # population divisor
            prior[c] = n_c / n if self.priors == "empirical" else 1.0 / len(classes)

        self.classes_ = np.arange(N_CLASSES)
        self.trained_classes_ = classes
        self.theta_ = theta
        self.var_ = var
        self.class_prior_ = prior
        self.var_floor_ = floor
        self.n_features_in_ = k
        return self

    def _check_is_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("GaussianBackend is not fitted")

    def _joint_log_likelihood(self, queries: np.ndarray) -> np.ndarray:
        jll = np.full((queries.shape[0], N_CLASSES), -np.inf)
        for c in self.trained_classes_:
            log_prior = np.log(self.class_prior_[c])
            log_det = np.sum(LOG_2PI + np.log(self.var_[c]))
            maha = np.sum((queries - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll[:, c] = log_prior - 0.5 * (log_det + maha)
        return jll

    def predict_proba(self, X) -> np.ndarray:
        self._check_is_fitted()
        queries = _as_queries(X, self.n_features_in_)
        jll = self._joint_log_likelihood(queries)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict(self, X) -> np.ndarray:
        # argmax over posteriors; np.argmax keeps the lowest tied class code
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)


def save_knn(model: KnnClassifier, out_dir, name: str = "knn") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_embedding(model.X_, out_dir / f"{name}_store.emb1")
    write_embedding(model.y_[None, :].astype(np.float64), out_dir / f"{name}_labels.emb1")
    with open(out_dir / f"{name}_scalars.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "value"])
        writer.writerow(["k", model.k])
        writer.writerow(["p", repr(float(model.p))])


def load_knn(in_dir, name: str = "knn") -> KnnClassifier:
    in_dir = Path(in_dir)
    with open(in_dir / f"{name}_scalars.csv", "r", encoding="utf-8", newline="") as fh:
        scalars = {row[0]: row[1] for row in csv.reader(fh) if row and row[0] != "field"}
    model = KnnClassifier(k=int(scalars["k"]), p=float(scalars["p"]))
    store = read_embedding(in_dir / f"{name}_store.emb1").astype(np.float64)
    labels = read_embedding(in_dir / f"{name}_labels.emb1")[0].astype(np.int64)
    return model.fit(store, labels)


def save_gnb(model: GaussianBackend, out_dir, name: str = "gnb") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_embedding(model.theta_, out_dir / f"{name}_means.emb1")
    write_embedding(model.var_, out_dir / f"{name}_variances.emb1")
    with open(out_dir / f"{name}_scalars.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "value"])
        writer.writerow(["priors_mode", model.priors])
        writer.writerow(["var_floor", repr(float(model.var_floor_))])
        writer.writerow(["class_prior", " ".join(repr(float(v)) for v in model.class_prior_)])
        writer.writerow(["trained_classes", " ".join(str(c) for c in model.trained_classes_)])


def load_gnb(in_dir, name: str = "gnb") -> GaussianBackend:
    in_dir = Path(in_dir)
    with open(in_dir / f"{name}_scalars.csv", "r", encoding="utf-8", newline="") as fh:
        scalars = {row[0]: row[1] for row in csv.reader(fh) if row and row[0] != "field"}
    model = GaussianBackend(var_floor=float(scalars["var_floor"]), priors=scalars["priors_mode"])
    model.theta_ = read_embedding(in_dir / f"{name}_means.emb1").astype(np.float64)
    model.var_ = read_embedding(in_dir / f"{name}_variances.emb1").astype(np.float64)
    model.class_prior_ = np.array([float(v) for v in scalars["class_prior"].split()])
    model.trained_classes_ = np.array(
        [int(c) for c in scalars["trained_classes"].split()], dtype=np.int64
    )
    model.classes_ = np.arange(N_CLASSES)
    model.var_floor_ = float(scalars["var_floor"])
    model.n_features_in_ = model.theta_.shape[1]
    return model

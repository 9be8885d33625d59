"""Multiclass linear discriminant projection for dimensionality reduction.

The projection maximizes between-class over regularized within-class scatter
via symmetric whitening: Cholesky-factor the shrunk within-class scatter,
whiten the between-class structure, and eigendecompose. Because the
between-class scatter of C classes has rank at most C-1, the eigensolve runs
on its small whitened Gram matrix, which is exact and keeps high-dimensional
fits cheap.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dataio import N_CLASSES, read_embedding, write_embedding
from .errors import DegenerateScatter, DimensionMismatch, InvalidArgument, MissingClass

MAX_COMPONENTS = N_CLASSES - 1


class LdaReducer(BaseEstimator, TransformerMixin):
    """Supervised linear projection onto at most four discriminant directions.

    Parameters
    ----------
    n_components : int
        Output dimensionality, at most ``min(K, 4)`` for five classes.
    shrinkage : float
        Within-class scatter regularizer in [0, 1]. The scatter used is
        ``(1 - shrinkage) * S_w + shrinkage * (tr(S_w) / K) * I``.

    Attributes
    ----------
    projection_ : ndarray of shape (K, n_components)
        Columns ordered by descending discriminant eigenvalue, each scaled
        to unit Euclidean norm, sign fixed so the largest-magnitude entry
        is positive.
    global_mean_ : ndarray of shape (K,)
        Training mean subtracted before projecting.
    class_means_ : ndarray of shape (n_present_classes, K)
    classes_ : ndarray
        Class codes present in the training data, ascending.
    eigenvalues_ : ndarray of shape (n_components,)
    """

    def __init__(self, n_components: int = 4, shrinkage: float = 1e-4):
        self.n_components = n_components
        self.shrinkage = shrinkage

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"X is {X.shape}, y is {y.shape}; need N x K with N labels"
            )
        n, k = X.shape
        m = int(self.n_components)
        if not 1 <= m <= min(k, MAX_COMPONENTS):
            raise InvalidArgument(
                f"n_components must be in 1..min(K, {MAX_COMPONENTS}), got {m} for K={k}"
            )
        if not 0.0 <= self.shrinkage <= 1.0:
            raise InvalidArgument(f"shrinkage must be in [0, 1], got {self.shrinkage}")

        classes, counts = np.unique(y, return_counts=True)
        if (counts < 2).any():
            few = classes[counts < 2].tolist()
            raise MissingClass(f"classes {few} have fewer than 2 samples")

        global_mean = X.mean(axis=0)
        scatter_within = np.zeros((k, k))
        mean_offsets = np.empty((k, len(classes)))
        for j, (c, n_c) in enumerate(zip(classes, counts)):
            block = X[y == c]
            mu = block.mean(axis=0)
            centered = block - mu
            scatter_within += centered.T @ centered
            mean_offsets[:, j] = np.sqrt(n_c) * (mu - global_mean)

        shrunk = (1.0 - self.shrinkage) * scatter_within
        shrunk[np.diag_indices_from(shrunk)] += (
            self.shrinkage * np.trace(scatter_within) / k
        )
        try:
            chol = np.linalg.cholesky(shrunk)
        except np.linalg.LinAlgError as exc:
            raise DegenerateScatter(
                f"within-class scatter singular at shrinkage={self.shrinkage}"
            ) from exc

        # Whitened between-class structure: S_b = A A^T with A = mean_offsets,
        # so eig(L^-1 S_b L^-T) reduces to the (C x C) Gram of B = L^-1 A.
        whitened = scipy.linalg.solve_triangular(chol, mean_offsets, lower=True)
        gram = whitened.T @ whitened
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(-evals, kind="stable")[:m]
        top = evals[order]
        tol = max(float(evals.max()), 0.0) * 1e-10
        if (top <= tol).any():
            raise DegenerateScatter(
                f"between-class scatter rank < {m} requested components"
            )
        directions = whitened @ (evecs[:, order] / np.sqrt(top))
        projection = scipy.linalg.solve_triangular(chol.T, directions, lower=False)
        projection /= np.linalg.norm(projection, axis=0)
        # Sign convention: largest-magnitude entry of each column positive.
        anchors = np.argmax(np.abs(projection), axis=0)
        signs = np.sign(projection[anchors, np.arange(m)])
        signs[signs == 0] = 1.0
        projection *= signs

        self.classes_ = classes
        self.class_counts_ = counts
        self.global_mean_ = global_mean
        self.class_means_ = np.vstack(
            [X[y == c].mean(axis=0) for c in classes]
        )
        self.projection_ = projection
        self.eigenvalues_ = top
        self.n_features_in_ = k
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "projection_"):
            raise NotFittedError("LdaReducer is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return (X - self.global_mean_) @ self.projection_


def save_lda(model: LdaReducer, out_dir, name: str) -> None:
    """Serialize a fitted reducer as two embedding tensors plus a scalar CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_embedding(model.projection_, out_dir / f"{name}_projection.emb1")
    means = np.vstack([model.global_mean_[None, :], model.class_means_])
    write_embedding(means, out_dir / f"{name}_means.emb1")
    with open(out_dir / f"{name}_scalars.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "value"])
        writer.writerow(["n_components", model.projection_.shape[1]])
        writer.writerow(["shrinkage", repr(float(model.shrinkage))])
        writer.writerow(["classes", " ".join(str(c) for c in model.classes_)])
        writer.writerow(["class_counts", " ".join(str(c) for c in model.class_counts_)])
        writer.writerow(["eigenvalues", " ".join(repr(float(v)) for v in model.eigenvalues_)])


def load_lda(in_dir, name: str) -> LdaReducer:
    """Rebuild a reducer saved by :func:`save_lda` (float32 storage precision)."""
    in_dir = Path(in_dir)
    with open(in_dir / f"{name}_scalars.csv", "r", encoding="utf-8", newline="") as fh:
        scalars = {row[0]: row[1] for row in csv.reader(fh) if row and row[0] != "field"}
    projection = read_embedding(in_dir / f"{name}_projection.emb1").astype(np.float64)
    means = read_embedding(in_dir / f"{name}_means.emb1").astype(np.float64)
    model = LdaReducer(
        n_components=int(scalars["n_components"]),
        shrinkage=float(scalars["shrinkage"]),
    )
    model.classes_ = np.array([int(c) for c in scalars["classes"].split()], dtype=np.int64)
    model.class_counts_ = np.array(
        [int(c) for c in scalars["class_counts"].split()], dtype=np.int64
    )
    model.eigenvalues_ = np.array([float(v) for v in scalars["eigenvalues"].split()])
    model.global_mean_ = means[0]
    model.class_means_ = means[1:]
    model.projection_ = projection
    model.n_features_in_ = projection.shape[0]
    return model

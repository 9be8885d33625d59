import numpy as np
import pytest

from stutterkit import generate_synthetic
from stutterkit.features import FeatureMatrix

UNIFORM = (0.2, 0.2, 0.2, 0.2, 0.2)


def gaussian_blobs(rng, n_per_class, dim, sep, n_classes=5):
    """Isotropic unit-variance clusters with class means sep apart pairwise."""
    if dim >= n_classes:
        q, _ = np.linalg.qr(rng.standard_normal((dim, n_classes)))
        directions = q.T
    else:
        # regular simplex: n_classes equidistant points in n_classes-1 dims
        assert dim >= n_classes - 1
        centered = np.eye(n_classes) - 1.0 / n_classes
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        directions = np.zeros((n_classes, dim))
        directions[:, : n_classes - 1] = centered @ vt[: n_classes - 1].T
    means = directions * (sep / np.sqrt(2.0))
    X = np.vstack([means[c] + rng.standard_normal((n_per_class, dim)) for c in range(n_classes)])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return X, y


def feature_matrix(X, y, n_podcasts=10, prefix="pod"):
    """Wrap arrays as a FeatureMatrix with round-robin podcast assignment."""
    n = len(y)
    podcasts = np.array([f"{prefix}{i % n_podcasts:03d}" for i in range(n)])
    clips = np.array([f"clip{i:05d}" for i in range(n)])
    return FeatureMatrix(values=X, labels=y, podcast_ids=podcasts, clip_ids=clips)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small on-disk dataset: 10 podcasts x 4 clips, w2v2 L11 + ecapa, separable."""
    root = tmp_path_factory.mktemp("tiny_ds")
    manifest = generate_synthetic(
        root, num_podcasts=10, clips_per_podcast=4, class_sep=8.0, seed=11,
        layers=(11,), class_weights=UNIFORM,
    )
    return manifest


@pytest.fixture(scope="session")
def tri_layer_dataset(tmp_path_factory):
    """10 podcasts x 4 clips with layers 1, 7, 11 for concat pipelines."""
    root = tmp_path_factory.mktemp("tri_ds")
    manifest = generate_synthetic(
        root, num_podcasts=10, clips_per_podcast=4, class_sep=8.0, seed=23,
        layers=(1, 7, 11), class_weights=UNIFORM,
    )
    return manifest

"""Fixed-length feature vectors from embedding tensors.

Temporal statistical pooling (mean concatenated with population standard
deviation), magnitude normalization for single-vector speaker embeddings,
and row-aligned concatenation of feature blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dataio
from .errors import (
    EmptyTensor,
    MissingLayer,
    NonFiniteValue,
    RowMisalignment,
    ZeroVector,
)


def statistical_pool(tensor) -> np.ndarray:
    """Pool a T x D tensor to a 2D-length vector: per-dim mean then std.

    The standard deviation uses the population divisor T, so a single-frame
    tensor pools to its values followed by zeros.
    """
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise EmptyTensor(f"expected nonempty T x D tensor, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("tensor holds non-finite values")
    return np.concatenate([arr.mean(axis=0), arr.std(axis=0)])


def magnitude_normalize(vector) -> np.ndarray:
    """Scale a vector to unit Euclidean norm."""
    v = np.asarray(vector, dtype=np.float64)
    if not np.isfinite(v).all():
        raise NonFiniteValue("vector holds non-finite values")
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise ZeroVector(f"norm {norm} is below 1e-12")
    return v / norm


@dataclass(frozen=True)
class FeatureMatrix:
    """N x K feature values with aligned labels and podcast ids.

    ``clip_ids`` is optional but carried whenever known so that concatenation
    can verify clip-level alignment rather than assume it.
    """

    values: np.ndarray
    labels: np.ndarray
    podcast_ids: np.ndarray
    clip_ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        podcast_ids = np.asarray(self.podcast_ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "podcast_ids", podcast_ids)
        if self.clip_ids is not None:
            object.__setattr__(self, "clip_ids", np.asarray(self.clip_ids))
        if values.ndim != 2:
            raise RowMisalignment(f"values must be N x K, got shape {values.shape}")
        n = values.shape[0]
        if labels.shape != (n,) or podcast_ids.shape != (n,):
            raise RowMisalignment("labels and podcast_ids must align with values rows")
        if self.clip_ids is not None and self.clip_ids.shape != (n,):
            raise RowMisalignment("clip_ids must align with values rows")
        if not np.isfinite(values).all():
            raise NonFiniteValue("feature values hold non-finite entries")
        if labels.size and (labels.min() < 0 or labels.max() >= dataio.N_CLASSES):
            raise RowMisalignment("labels must be class codes 0..4")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices)
        return FeatureMatrix(
            values=self.values[idx],
            labels=self.labels[idx],
            podcast_ids=self.podcast_ids[idx],
            clip_ids=None if self.clip_ids is None else self.clip_ids[idx],
        )

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        """Same rows, new feature columns (e.g. after a projection)."""
        return FeatureMatrix(values, self.labels, self.podcast_ids, self.clip_ids)


def concat_features(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Column-concatenate feature blocks after verifying row alignment."""
    if not parts:
        raise RowMisalignment("need at least one feature matrix")
    first = parts[0]
    for i, part in enumerate(parts[1:], start=1):
        if part.n_samples != first.n_samples:
            raise RowMisalignment(
                f"part {i} has {part.n_samples} rows, part 0 has {first.n_samples}"
            )
        if not np.array_equal(part.labels, first.labels):
            raise RowMisalignment(f"part {i} label sequence differs from part 0")
        if not np.array_equal(part.podcast_ids, first.podcast_ids):
            raise RowMisalignment(f"part {i} podcast sequence differs from part 0")
        if (
            part.clip_ids is not None
            and first.clip_ids is not None
            and not np.array_equal(part.clip_ids, first.clip_ids)
        ):
            raise RowMisalignment(f"part {i} clip sequence differs from part 0")
    return FeatureMatrix(
        values=np.hstack([p.values for p in parts]),
        labels=first.labels,
        podcast_ids=first.podcast_ids,
        clip_ids=first.clip_ids,
    )


def build_feature_matrix(
    manifest: dataio.DatasetManifest,
    source: str,
    layer: int = 0,
    *,
    normalize: bool = False,
    clip_order: Sequence[str] | None = None,
) -> FeatureMatrix:
    """Load one (source, layer) stream of a manifest as a feature matrix.

    w2v2 tensors are statistically pooled to 2*768 values; ecapa tensors are
    used raw (192 values), optionally magnitude-normalized. ``clip_order``
    restricts and orders the rows by clip id, which keeps several streams of
    the same manifest row-aligned.
    """
    rows = manifest.select(source, layer)
    if not rows:
        raise MissingLayer(f"manifest has no rows for source={source!r} layer={layer}")
    by_clip = {row.clip_id: row for row in rows}
    if clip_order is None:
        ordered = [row.clip_id for row in rows]
    else:
        missing = [c for c in clip_order if c not in by_clip]
        if missing:
            raise RowMisalignment(
                f"stream ({source}, {layer}) lacks clips {missing[:5]}"
                + ("..." if len(missing) > 5 else "")
            )
        ordered = list(clip_order)

    vectors = []
    labels = []
    podcasts = []
    for clip_id in ordered:
        clip = dataio.load_clip(manifest, by_clip[clip_id])
        tensor = clip.tensor.astype(np.float64)
        if source == dataio.ECAPA:
            vec = tensor[0]
            if normalize:
                vec = magnitude_normalize(vec)
        else:
            vec = statistical_pool(tensor)
        vectors.append(vec)
        labels.append(int(clip.label))
        podcasts.append(clip.podcast_id)
    return FeatureMatrix(
        values=np.asarray(vectors, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        podcast_ids=np.asarray(podcasts),
        clip_ids=np.asarray(ordered),
    )

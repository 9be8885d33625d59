"""Stuttering detection over precomputed speech embeddings.

Pooling and normalization of embedding tensors, supervised dimensionality
reduction, KNN / Gaussian / two-branch neural back-ends, score and embedding
fusion, and a podcast-level 10-fold evaluation harness with a CLI.
"""

from .classifiers import GaussianBackend, KnnClassifier, minkowski_distance
from .dataio import (
    ClassLabel,
    DatasetManifest,
    EmbeddingClip,
    generate_synthetic,
    load_manifest,
    read_embedding,
    write_embedding,
)
from .evalharness import (
    FoldPlan,
    MetricsTable,
    layer_sweep,
    make_folds,
    per_class_accuracy,
    run_experiment,
)
from .features import (
    FeatureMatrix,
    build_feature_matrix,
    concat_features,
    magnitude_normalize,
    statistical_pool,
)
from .fusion import Pipeline, PipelineSpec, build_pipeline, score_fuse
from .lda import LdaReducer
from .neuralnet import TwoBranchClassifier, gradient_check, pseudo_label

__version__ = "0.1.0"

__all__ = [
    "ClassLabel",
    "DatasetManifest",
    "EmbeddingClip",
    "FeatureMatrix",
    "FoldPlan",
    "GaussianBackend",
    "KnnClassifier",
    "LdaReducer",
    "MetricsTable",
    "Pipeline",
    "PipelineSpec",
    "TwoBranchClassifier",
    "build_feature_matrix",
    "build_pipeline",
    "concat_features",
    "generate_synthetic",
    "gradient_check",
    "layer_sweep",
    "load_manifest",
    "magnitude_normalize",
    "make_folds",
    "minkowski_distance",
    "per_class_accuracy",
    "pseudo_label",
    "read_embedding",
    "run_experiment",
    "score_fuse",
    "statistical_pool",
    "write_embedding",
]

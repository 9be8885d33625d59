"""Evidence combination across embedding sources.

Score fusion takes a convex combination of two classifiers' probability
vectors (weight alpha on the contextual-embedding side). Pipelines bundle the
per-stream feature reduction, the classifier family, and the fusion mode into
one executable object that is fitted per fold.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Mapping

import numpy as np

from . import dataio
from .classifiers import GaussianBackend, KnnClassifier
from .errors import InvalidAlpha, InvalidSpec, NotAProbability
from .features import FeatureMatrix, concat_features
from .lda import LdaReducer
from .neuralnet import TwoBranchClassifier

Stream = tuple[str, int]

CLASSIFIER_FAMILIES = ("knn", "gnb", "nn")
FUSION_MODES = ("none", "score", "concat")


def score_fuse(p_w2v2, p_ecapa, alpha: float = 0.9) -> np.ndarray:
    """Convex combination ``alpha * p_w2v2 + (1 - alpha) * p_ecapa``.

    Accepts single vectors or row-stacked matrices of probability vectors;
    both inputs must lie on the 5-class simplex within 1e-9.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha must be in [0, 1], got {alpha}")
    a = np.asarray(p_w2v2, dtype=np.float64)
    b = np.asarray(p_ecapa, dtype=np.float64)
    if a.shape != b.shape:
        raise NotAProbability(f"shapes differ: {a.shape} vs {b.shape}")
    for name, arr in (("p_w2v2", a), ("p_ecapa", b)):
        rows = np.atleast_2d(arr)
        if rows.shape[1] != dataio.N_CLASSES:
            raise NotAProbability(f"{name} must have {dataio.N_CLASSES} entries per vector")
        if (rows < -1e-12).any():
            raise NotAProbability(f"{name} holds negative entries")
        if np.abs(rows.sum(axis=1) - 1.0).max() > 1e-9:
            raise NotAProbability(f"{name} rows do not sum to 1 within 1e-9")
    return alpha * a + (1.0 - alpha) * b


@dataclass(frozen=True)
class PipelineSpec:
    """Everything needed to reproduce one experiment configuration.

    ``streams`` lists (source, layer) pairs in presentation order; for score
    fusion the w2v2 stream receives weight alpha. ``ecapa_classifier``
    optionally swaps the family used on the ecapa side of score fusion, which
    is recorded as a non-standard combination in run metadata.
    """

    streams: tuple[Stream, ...]
    classifier: str = "gnb"
    fusion: str = "none"
    alpha: float = 0.9
    lda_components: int | None = 4
    shrinkage: float = 1e-4
    normalize: bool = False
    knn_k: int = 5
    knn_p: float = 2.0
    gnb_priors: str = "empirical"
    gnb_var_floor: float | None = None
    nn_hidden: tuple[int, int] = (256, 64)
    nn_lr: float = 1e-2
    nn_batch_size: int = 128
    nn_max_epochs: int = 200
    nn_patience: int = 7
    nn_dropout: float = 0.2
    ecapa_classifier: str | None = None

    def __post_init__(self):
        streams = tuple((str(src), int(layer)) for src, layer in self.streams)
        object.__setattr__(self, "streams", streams)
        if not streams:
            raise InvalidSpec("at least one (source, layer) stream is required")
        if len(set(streams)) != len(streams):
            raise InvalidSpec(f"duplicate streams in {streams}")
        for src, layer in streams:
            if src not in dataio.SOURCES:
                raise InvalidSpec(f"unknown source {src!r}")
            if src == dataio.ECAPA and layer != 0:
                raise InvalidSpec("ecapa streams use layer 0")
            if src == dataio.W2V2 and layer not in dataio.W2V2_LAYERS:
                raise InvalidSpec(f"w2v2 layer must be in 1..13, got {layer}")
        if self.classifier not in CLASSIFIER_FAMILIES:
            raise InvalidSpec(f"classifier must be one of {CLASSIFIER_FAMILIES}")
        if self.fusion not in FUSION_MODES:
            raise InvalidSpec(f"fusion must be one of {FUSION_MODES}")
        if self.fusion == "none" and len(streams) != 1:
            raise InvalidSpec("fusion 'none' takes exactly one stream")
        if self.fusion == "score":
            sources = sorted(src for src, _ in streams)
            if len(streams) != 2 or sources != sorted(dataio.SOURCES):
                raise InvalidSpec("score fusion needs exactly one w2v2 and one ecapa stream")
        if self.fusion == "concat" and len(streams) < 2:
            raise InvalidSpec("concat fusion needs at least two streams")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidSpec(f"alpha must be in [0, 1], got {self.alpha}")
        if self.lda_components is not None and not 1 <= self.lda_components <= 4:
            raise InvalidSpec("lda_components must be in 1..4 or None")
        if self.ecapa_classifier is not None and self.ecapa_classifier not in CLASSIFIER_FAMILIES:
            raise InvalidSpec(f"ecapa_classifier must be one of {CLASSIFIER_FAMILIES}")

    @property
    def is_cross_family(self) -> bool:
        return (
            self.ecapa_classifier is not None
            and self.ecapa_classifier != self.classifier
        )

    def family_for(self, stream: Stream) -> str:
        if stream[0] == dataio.ECAPA and self.ecapa_classifier is not None:
            return self.ecapa_classifier
        return self.classifier

    def to_meta(self) -> dict[str, str]:
        meta = {}
        for key, value in asdict(self).items():
            if key == "streams":
                value = ";".join(f"{src}:{layer}" for src, layer in self.streams)
            meta[key] = str(value)
        meta["cross_family"] = str(self.is_cross_family)
        return meta


def _make_model(family: str, spec: PipelineSpec, seed: int):
    if family == "knn":
        return KnnClassifier(k=spec.knn_k, p=spec.knn_p)
    if family == "gnb":
        return GaussianBackend(var_floor=spec.gnb_var_floor, priors=spec.gnb_priors)
    return TwoBranchClassifier(
        hidden=spec.nn_hidden,
        lr=spec.nn_lr,
        batch_size=spec.nn_batch_size,
        max_epochs=spec.nn_max_epochs,
        patience=spec.nn_patience,
        dropout=spec.nn_dropout,
        seed=seed,
    )


def _fit_model(model, train: FeatureMatrix, valid: FeatureMatrix | None):
    if isinstance(model, TwoBranchClassifier):
        if valid is not None:
            return model.fit(train.values, train.labels, valid.values, valid.labels)
        return model.fit(train.values, train.labels)
    return model.fit(train.values, train.labels)


def _apply_reducer(reducer: LdaReducer | None, part: FeatureMatrix) -> FeatureMatrix:
    if reducer is None:
        return part
    return part.with_values(reducer.transform(part.values))


class FittedPipeline:
    """Per-fold fitted state: reducers per stream plus fitted classifier(s)."""

    def __init__(self, spec: PipelineSpec, reducers: dict[Stream, LdaReducer | None],
                 models: dict):
        self.spec = spec
        self.reducers = reducers
        self.models = models

    def _reduced(self, stream: Stream, part: FeatureMatrix) -> FeatureMatrix:
        return _apply_reducer(self.reducers[stream], part)

    def _panel(self, data: Mapping[Stream, FeatureMatrix]) -> dict[Stream, FeatureMatrix]:
        missing = [s for s in self.spec.streams if s not in data]
        if missing:
            raise InvalidSpec(f"data lacks streams {missing}")
        return {s: self._reduced(s, data[s]) for s in self.spec.streams}

    def predict_proba(self, data: Mapping[Stream, FeatureMatrix]) -> np.ndarray:
        panel = self._panel(data)
        if self.spec.fusion == "score":
            w2v2_stream = next(s for s in self.spec.streams if s[0] == dataio.W2V2)
            ecapa_stream = next(s for s in self.spec.streams if s[0] == dataio.ECAPA)
            p_w2v2 = self.models[w2v2_stream].predict_proba(panel[w2v2_stream].values)
            p_ecapa = self.models[ecapa_stream].predict_proba(panel[ecapa_stream].values)
            return score_fuse(p_w2v2, p_ecapa, self.spec.alpha)
        if self.spec.fusion == "concat":
            merged = concat_features([panel[s] for s in self.spec.streams])
            return self.models["concat"].predict_proba(merged.values)
        stream = self.spec.streams[0]
        return self.models[stream].predict_proba(panel[stream].values)

    def predict(self, data: Mapping[Stream, FeatureMatrix]) -> np.ndarray:
        panel = self._panel(data)
        if self.spec.fusion == "score":
            # fused vector decides; ties go to the lower class code
            return np.argmax(self.predict_proba(data), axis=1).astype(np.int64)
        if self.spec.fusion == "concat":
            merged = concat_features([panel[s] for s in self.spec.streams])
            return self.models["concat"].predict(merged.values)
        stream = self.spec.streams[0]
        return self.models[stream].predict(panel[stream].values)


class Pipeline:
    """Unfitted pipeline; ``fit`` closes over one fold's training state."""

    def __init__(self, spec: PipelineSpec):
        self.spec = spec

    def fit(self, train: Mapping[Stream, FeatureMatrix],
            valid: Mapping[Stream, FeatureMatrix] | None = None,
            seed: int = 0) -> FittedPipeline:
        spec = self.spec
        missing = [s for s in spec.streams if s not in train]
        if missing:
            raise InvalidSpec(f"training data lacks streams {missing}")

        reducers: dict[Stream, LdaReducer | None] = {}
        train_parts: dict[Stream, FeatureMatrix] = {}
        valid_parts: dict[Stream, FeatureMatrix] = {}
        for stream in spec.streams:
            part = train[stream]
            if spec.lda_components is not None:
                reducer = LdaReducer(spec.lda_components, spec.shrinkage)
                reducer.fit(part.values, part.labels)
            else:
                reducer = None
            reducers[stream] = reducer
            train_parts[stream] = _apply_reducer(reducer, part)
            if valid is not None and stream in valid:
                valid_parts[stream] = _apply_reducer(reducer, valid[stream])

        models: dict = {}
        if spec.fusion == "concat":
            merged_train = concat_features([train_parts[s] for s in spec.streams])
            merged_valid = None
            if len(valid_parts) == len(spec.streams):
                merged_valid = concat_features([valid_parts[s] for s in spec.streams])
            model = _make_model(spec.classifier, spec, seed)
            models["concat"] = _fit_model(model, merged_train, merged_valid)
        elif spec.fusion == "score":
            for stream in spec.streams:
                model = _make_model(spec.family_for(stream), spec, seed)
                models[stream] = _fit_model(model, train_parts[stream], valid_parts.get(stream))
        else:
            stream = spec.streams[0]
            model = _make_model(spec.classifier, spec, seed)
            models[stream] = _fit_model(model, train_parts[stream], valid_parts.get(stream))
        return FittedPipeline(spec, reducers, models)


def build_pipeline(spec: PipelineSpec) -> Pipeline:
    """Validate a spec (done at construction) and wrap it as an executable pipeline."""
    return Pipeline(spec)

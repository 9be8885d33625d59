"""On-disk embedding tensors, dataset manifests, and synthetic datasets.

Embedding files use a fixed little-endian binary layout ("EMB1"):

    bytes 0-3    magic ``EMB1``
    byte  4      format version, currently 0x01
    byte  5      dtype code, 0x01 = float32 little-endian
    bytes 6-7    reserved, must be 0x0000
    bytes 8-11   T, number of frames, uint32
    bytes 12-15  D, feature dimension, uint32
    bytes 16-    exactly T*D float32 values, row-major

Values are stored as float32; numeric stages upcast to float64 after
loading. Manifests are UTF-8 CSV files with the exact header
``clip_id,podcast_id,label,source,layer,path``. Relative paths are
resolved against the directory containing the manifest.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DuplicateKey,
    EmptyTensor,
    InvalidArgument,
    InvalidRow,
    IoFailure,
    MissingHeader,
    NonFiniteValue,
    TruncatedPayload,
    UnknownLabel,
    UnresolvablePath,
    UnsupportedVersion,
)

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 0x01
EMB1_DTYPE_FLOAT32 = 0x01
_HEADER = struct.Struct("<4sBBHII")

ECAPA = "ecapa"
W2V2 = "w2v2"
SOURCES = (ECAPA, W2V2)
ECAPA_DIM = 192
W2V2_DIM = 768
W2V2_LAYERS = tuple(range(1, 14))  # layer 1 = local encoder, 2..13 = transformer blocks

MANIFEST_HEADER = ("clip_id", "podcast_id", "label", "source", "layer", "path")


class ClassLabel(enum.IntEnum):
    """The five clip-level outcomes, coded in report-column order."""

    REPETITION = 0
    PROLONGATION = 1
    BLOCK = 2
    INTERJECTION = 3
    FLUENT = 4

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise UnknownLabel(
                f"unknown label {name!r}; expected one of {', '.join(LABEL_NAMES)}"
            ) from None

    @property
    def short(self) -> str:
        """Single-letter report column (R, P, B, I, F)."""
        return "RPBIF"[int(self)]


LABEL_NAMES = tuple(label.name.lower() for label in ClassLabel)
N_CLASSES = len(ClassLabel)

# Fluent-heavy label marginal used by the synthetic generator, in code order.
DEFAULT_CLASS_WEIGHTS = (0.12, 0.10, 0.08, 0.15, 0.55)


# --------------------------------------------------------------------------
# EMB1 read/write
# --------------------------------------------------------------------------

def _parse_header(raw: bytes, path) -> tuple[int, int]:
    if len(raw) < _HEADER.size:
        raise TruncatedPayload(f"{path}: shorter than the 16-byte header")
    magic, version, dtype, reserved, t, d = _HEADER.unpack_from(raw)
    if magic != EMB1_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {EMB1_MAGIC!r}")
    if version != EMB1_VERSION:
        raise UnsupportedVersion(f"{path}: version {version} unsupported")
    if dtype != EMB1_DTYPE_FLOAT32:
        raise UnsupportedVersion(f"{path}: dtype code {dtype} unsupported")
    if reserved != 0:
        raise UnsupportedVersion(f"{path}: reserved bytes must be zero")
    if t < 1 or d < 1:
        raise EmptyTensor(f"{path}: header declares empty tensor T={t} D={d}")
    return t, d


def read_embedding_header(path) -> tuple[int, int]:
    """Return (T, D) from an embedding file without loading its payload."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return _parse_header(raw, path)


def read_embedding(path) -> np.ndarray:
    """Load a T x D float32 tensor from an EMB1 file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    t, d = _parse_header(raw, path)
    expected = _HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise TruncatedPayload(f"{path}: {len(raw)} bytes, expected {expected}")
    tensor = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d)
    if not np.isfinite(tensor).all():
        raise NonFiniteValue(f"{path}: payload holds non-finite values")
    return tensor.copy()


def write_embedding(tensor, path) -> None:
    """Write a T x D tensor as an EMB1 file (values stored as float32)."""
    arr = np.asarray(tensor)
    if arr.ndim != 2:
        raise InvalidArgument(f"tensor must be 2-D (T x D), got shape {arr.shape}")
    t, d = arr.shape
    if t < 1 or d < 1:
        raise EmptyTensor(f"tensor must have T >= 1 and D >= 1, got {t} x {d}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("tensor holds non-finite values")
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(payload).all():
        raise NonFiniteValue("tensor overflows float32")
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(EMB1_MAGIC, EMB1_VERSION, EMB1_DTYPE_FLOAT32, 0, t, d))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# Clips and manifests
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingClip:
    """One clip's embedding tensor plus identity metadata."""

    clip_id: str
    podcast_id: str
    label: ClassLabel
    source: str
    layer: int
    tensor: np.ndarray

    def __post_init__(self):
        if self.source not in SOURCES:
            raise InvalidArgument(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.tensor.ndim != 2 or self.tensor.shape[0] < 1:
            raise EmptyTensor(f"clip {self.clip_id}: tensor must be T x D with T >= 1")
        if not np.isfinite(self.tensor).all():
            raise NonFiniteValue(f"clip {self.clip_id}: tensor holds non-finite values")
        t, d = self.tensor.shape
        if self.source == ECAPA:
            if d != ECAPA_DIM or t != 1:
                raise InvalidArgument(
                    f"clip {self.clip_id}: ecapa tensors are 1 x {ECAPA_DIM}, got {t} x {d}"
                )
            if self.layer != 0:
                raise InvalidArgument(f"clip {self.clip_id}: ecapa layer must be 0")
        else:
            if d != W2V2_DIM:
                raise InvalidArgument(
                    f"clip {self.clip_id}: w2v2 tensors are T x {W2V2_DIM}, got {t} x {d}"
                )
            if self.layer not in W2V2_LAYERS:
                raise InvalidArgument(
                    f"clip {self.clip_id}: w2v2 layer must be in 1..13, got {self.layer}"
                )


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    podcast_id: str
    label: ClassLabel
    source: str
    layer: int
    path: str

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.clip_id, self.source, self.layer)


@dataclass(frozen=True)
class DatasetManifest:
    """Validated clip inventory; row order is preserved from the CSV."""

    rows: tuple[ManifestRow, ...]
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    def podcasts(self) -> tuple[str, ...]:
        return tuple(sorted({row.podcast_id for row in self.rows}))

    def layers(self, source: str = W2V2) -> tuple[int, ...]:
        return tuple(sorted({row.layer for row in self.rows if row.source == source}))

    def select(self, source: str, layer: int) -> tuple[ManifestRow, ...]:
        return tuple(r for r in self.rows if r.source == source and r.layer == layer)

    def resolve(self, row: ManifestRow) -> Path:
        path = Path(row.path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_HEADER)
            for row in self.rows:
                writer.writerow(
                    [row.clip_id, row.podcast_id, row.label.name.lower(),
                     row.source, row.layer, row.path]
                )


def _validate_row_fields(fields: Sequence[str], line_no: int) -> ManifestRow:
    if len(fields) != len(MANIFEST_HEADER):
        raise InvalidRow(f"line {line_no}: expected {len(MANIFEST_HEADER)} fields, got {len(fields)}")
    clip_id, podcast_id, label_name, source, layer_text, path = fields
    if not clip_id or not podcast_id:
        raise InvalidRow(f"line {line_no}: empty clip_id or podcast_id")
    label = ClassLabel.from_name(label_name)
    if source not in SOURCES:
        raise InvalidRow(f"line {line_no}: source must be one of {SOURCES}, got {source!r}")
    try:
        layer = int(layer_text)
    except ValueError:
        raise InvalidRow(f"line {line_no}: layer {layer_text!r} is not an integer") from None
    if source == ECAPA and layer != 0:
        raise InvalidRow(f"line {line_no}: ecapa rows must have layer 0, got {layer}")
    if source == W2V2 and layer not in W2V2_LAYERS:
        raise InvalidRow(f"line {line_no}: w2v2 layer must be in 1..13, got {layer}")
    return ManifestRow(clip_id, podcast_id, label, source, layer, path)


def _check_row_path(manifest: DatasetManifest, row: ManifestRow, line_no: int) -> None:
    path = manifest.resolve(row)
    try:
        t, d = read_embedding_header(path)
    except (OSError, ValueError) as exc:
        raise UnresolvablePath(f"line {line_no}: {path}: {exc}") from exc
    if row.source == ECAPA and (t, d) != (1, ECAPA_DIM):
        raise UnresolvablePath(
            f"line {line_no}: {path}: ecapa file must be 1 x {ECAPA_DIM}, header says {t} x {d}"
        )
    if row.source == W2V2 and d != W2V2_DIM:
        raise UnresolvablePath(
            f"line {line_no}: {path}: w2v2 file must be T x {W2V2_DIM}, header says {t} x {d}"
        )


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Load and validate a manifest CSV.

    With ``check_paths`` every referenced file's 16-byte header is read and
    checked against the row's source; pass False to validate rows only.
    """
    path = Path(path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoFailure(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(MANIFEST_HEADER):
            raise MissingHeader(
                f"{path}: first row must be exactly {','.join(MANIFEST_HEADER)}"
            )
        rows: list[ManifestRow] = []
        seen: set[tuple[str, str, int]] = set()
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            row = _validate_row_fields(fields, line_no)
            if row.key in seen:
                raise DuplicateKey(f"line {line_no}: duplicate (clip_id, source, layer) {row.key}")
            seen.add(row.key)
            rows.append(row)
    manifest = DatasetManifest(rows=tuple(rows), root=path.parent)
    if check_paths:
        for line_no, row in enumerate(manifest.rows, start=2):
            _check_row_path(manifest, row, line_no)
    return manifest


def load_clip(manifest: DatasetManifest, row: ManifestRow) -> EmbeddingClip:
    """Read one manifest row's tensor and wrap it with validation."""
    tensor = read_embedding(manifest.resolve(row))
    return EmbeddingClip(
        clip_id=row.clip_id,
        podcast_id=row.podcast_id,
        label=row.label,
        source=row.source,
        layer=row.layer,
        tensor=tensor,
    )


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

def _class_means(rng: np.random.Generator, dim: int, class_sep: float) -> np.ndarray:
    # Orthonormal directions scaled so every pair of class means is exactly
    # class_sep apart (frame noise is unit-variance per dimension).
    q, _ = np.linalg.qr(rng.standard_normal((dim, N_CLASSES)))
    return q.T * (class_sep / math.sqrt(2.0))


def generate_synthetic(
    out_dir,
    num_podcasts: int,
    clips_per_podcast: int,
    class_sep: float,
    seed: int,
    *,
    layers: Sequence[int] = (1, 7, 11),
    include_ecapa: bool = True,
    signal_layers: Sequence[int] | None = None,
    class_weights: Sequence[float] | None = None,
    t_range: tuple[int, int] = (140, 160),
) -> DatasetManifest:
    """Write a synthetic embedding dataset and its manifest under ``out_dir``.

    Class ``c`` frames are drawn from a unit-variance Gaussian whose mean is
    ``class_sep / sqrt(2)`` along the c-th of five orthonormal directions, so
    any two class means are exactly ``class_sep`` apart. ``signal_layers``
    restricts the class-dependent means to a subset of w2v2 layers (all other
    layers carry pure noise); None means every layer carries signal. Output is
    a pure function of the arguments, including ``seed``.
    """
    if num_podcasts < 10:
        raise InvalidArgument("num_podcasts must be >= 10 for 10-fold podcast splits")
    if clips_per_podcast < 1:
        raise InvalidArgument("clips_per_podcast must be >= 1")
    if class_sep < 0:
        raise InvalidArgument("class_sep must be >= 0")
    layers = tuple(sorted(set(int(l) for l in layers)))
    if any(l not in W2V2_LAYERS for l in layers):
        raise InvalidArgument(f"layers must be within 1..13, got {layers}")
    if not layers and not include_ecapa:
        raise InvalidArgument("nothing to generate: no layers and no ecapa stream")
    if signal_layers is None:
        signal = set(layers)
    else:
        signal = set(int(l) for l in signal_layers)
    if class_weights is None:
        class_weights = DEFAULT_CLASS_WEIGHTS
    weights = np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (N_CLASSES,) or (weights < 0).any() or weights.sum() <= 0:
        raise InvalidArgument("class_weights must be 5 nonnegative values with positive sum")
    weights = weights / weights.sum()
    t_lo, t_hi = int(t_range[0]), int(t_range[1])
    if t_lo < 1 or t_hi < t_lo:
        raise InvalidArgument(f"bad t_range {t_range}")

    out_dir = Path(out_dir)
    emb_dir = out_dir / "emb"
    emb_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    ecapa_means = _class_means(rng, ECAPA_DIM, class_sep)
    w2v2_means = {}
    for layer in layers:
        means = _class_means(rng, W2V2_DIM, class_sep)
        w2v2_means[layer] = means if layer in signal else np.zeros_like(means)

    rows: list[ManifestRow] = []
    for p in range(num_podcasts):
        podcast_id = f"pod{p:03d}"
        for c in range(clips_per_podcast):
            clip_id = f"{podcast_id}_clip{c:03d}"
            label = ClassLabel(int(rng.choice(N_CLASSES, p=weights)))
            t = int(rng.integers(t_lo, t_hi + 1))
            for layer in layers:
                frames = w2v2_means[layer][label] + rng.standard_normal((t, W2V2_DIM))
                rel = f"emb/{clip_id}_{W2V2}_L{layer:02d}.emb1"
                write_embedding(frames, out_dir / rel)
                rows.append(ManifestRow(clip_id, podcast_id, label, W2V2, layer, rel))
            if include_ecapa:
                vec = ecapa_means[label] + rng.standard_normal((1, ECAPA_DIM))
                rel = f"emb/{clip_id}_{ECAPA}_L00.emb1"
                write_embedding(vec, out_dir / rel)
                rows.append(ManifestRow(clip_id, podcast_id, label, ECAPA, 0, rel))

    manifest = DatasetManifest(rows=tuple(rows), root=out_dir)
    manifest.save(out_dir / "manifest.csv")
    return manifest

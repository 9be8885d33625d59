"""Podcast-level 10-fold cross-validation, metrics, and report artifacts.

Folds are built by shuffling the podcast universe once per seed and rotating
over ten contiguous blocks: block i is the evaluation set, block i+1 (mod 10)
is the validation set, the rest train. A clip's fold role therefore depends
only on its podcast, and the ten evaluation sets are pairwise disjoint and
jointly cover every podcast.

Per-class accuracy is class-wise recall in percent; TA is the overall correct
fraction in percent. Aggregates are the mean over folds, then over repeats,
with standard deviations over all fold rows; the pooled row recomputes every
metric over the union of all evaluated clips.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import datetime
import importlib.metadata
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dataio
from .classifiers import GaussianBackend, KnnClassifier, save_gnb, save_knn
from .errors import LengthMismatch, MissingLayer, RowMisalignment, TooFewPodcasts
from .features import FeatureMatrix, build_feature_matrix
from .fusion import Pipeline, PipelineSpec, Stream
from .lda import save_lda
from .neuralnet import TwoBranchClassifier, save_two_branch, write_training_curves

N_FOLDS = 10

METRIC_COLUMNS = ("R", "P", "B", "I", "F", "TA")


@dataclass(frozen=True)
class Fold:
    train: frozenset[str]
    valid: frozenset[str]
    eval: frozenset[str]


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    folds: tuple[Fold, ...]

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)


def make_folds(podcast_ids: Iterable[str], seed: int) -> FoldPlan:
    """Rotation-based 10-fold plan over podcasts; deterministic given seed."""
    universe = sorted(set(podcast_ids))
    if len(universe) < N_FOLDS:
        raise TooFewPodcasts(f"need at least {N_FOLDS} podcasts, got {len(universe)}")
    rng = np.random.default_rng(seed)
    shuffled = [universe[i] for i in rng.permutation(len(universe))]
    blocks = [list(b) for b in np.array_split(np.array(shuffled, dtype=object), N_FOLDS)]
    folds = []
    for i in range(N_FOLDS):
        eval_set = frozenset(blocks[i])
        valid_set = frozenset(blocks[(i + 1) % N_FOLDS])
        train_set = frozenset(universe) - eval_set - valid_set
        folds.append(Fold(train=train_set, valid=valid_set, eval=eval_set))
    return FoldPlan(seed=seed, folds=tuple(folds))


@dataclass(frozen=True)
class FoldMetrics:
    """Per-class recall (percent, NaN when the class is absent) plus TA."""

    per_class: np.ndarray
    ta: float
    class_counts: np.ndarray
    n: int

    def as_row(self) -> dict[str, float]:
        row = {col: float(self.per_class[i]) for i, col in enumerate(METRIC_COLUMNS[:-1])}
        row["TA"] = float(self.ta)
        return row


def per_class_accuracy(predictions, truths) -> FoldMetrics:
    """Class-wise recall and total accuracy, both in percent."""
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truths, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise LengthMismatch(f"predictions {preds.shape} vs truths {truth.shape}")
    if preds.size == 0:
        raise LengthMismatch("cannot score zero predictions")
    per_class = np.full(dataio.N_CLASSES, np.nan)
    counts = np.zeros(dataio.N_CLASSES, dtype=np.int64)
    for c in range(dataio.N_CLASSES):
        mask = truth == c
        counts[c] = int(mask.sum())
        if counts[c]:
            per_class[c] = 100.0 * float((preds[mask] == c).sum()) / counts[c]
    ta = 100.0 * float((preds == truth).sum()) / preds.size
    return FoldMetrics(per_class=per_class, ta=ta, class_counts=counts, n=preds.size)


@dataclass(frozen=True)
class FoldReport:
    fold: int
    repeat: int
    metrics: FoldMetrics
    confusion: np.ndarray  # rows true, cols predicted


class MetricsTable:
    """Fold-level metric rows with mean / std / pooled aggregation."""

    def __init__(self, reports: Sequence[FoldReport]):
        self.reports = tuple(sorted(reports, key=lambda r: (r.repeat, r.fold)))

    def _stack(self) -> np.ndarray:
        rows = []
        for rep in self.reports:
            rows.append(np.concatenate([rep.metrics.per_class, [rep.metrics.ta]]))
        return np.asarray(rows)

    def mean(self) -> dict[str, float]:
        """Mean over folds within each repeat, then over repeats (NaN-aware)."""
        repeats = sorted({r.repeat for r in self.reports})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns -> na
            per_repeat = []
            for j in repeats:
                rows = np.asarray([
                    np.concatenate([r.metrics.per_class, [r.metrics.ta]])
                    for r in self.reports if r.repeat == j
                ])
                per_repeat.append(np.nanmean(rows, axis=0))
            agg = np.nanmean(np.asarray(per_repeat), axis=0)
        return dict(zip(METRIC_COLUMNS, (float(v) for v in agg)))

    def std(self) -> dict[str, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns -> na
            agg = np.nanstd(self._stack(), axis=0)
        return dict(zip(METRIC_COLUMNS, (float(v) for v in agg)))

    def pooled(self) -> dict[str, float]:
        """Metrics recomputed over the union of all evaluated clips."""
        confusion = sum(r.confusion for r in self.reports)
        counts = confusion.sum(axis=1)
        values = []
        for c in range(dataio.N_CLASSES):
            values.append(100.0 * confusion[c, c] / counts[c] if counts[c] else np.nan)
        total = confusion.sum()
        values.append(100.0 * np.trace(confusion) / total if total else np.nan)
        return dict(zip(METRIC_COLUMNS, (float(v) for v in values)))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stat", *METRIC_COLUMNS])
            for stat, row in (("mean", self.mean()), ("std", self.std()), ("pooled", self.pooled())):
                writer.writerow([stat, *(_fmt(row[c]) for c in METRIC_COLUMNS)])


def _fmt(value: float) -> str:
    return "na" if np.isnan(value) else f"{value:.6f}"


@dataclass(frozen=True)
class ExperimentResult:
    spec: PipelineSpec
    plan: FoldPlan
    metrics: MetricsTable
    out_dir: Path | None


def _confusion(preds: np.ndarray, truth: np.ndarray) -> np.ndarray:
    matrix = np.zeros((dataio.N_CLASSES, dataio.N_CLASSES), dtype=np.int64)
    for t, p in zip(truth, preds):
        matrix[t, p] += 1
    return matrix


def load_bundle(manifest: dataio.DatasetManifest, spec: PipelineSpec) -> dict[Stream, FeatureMatrix]:
    """Load every stream the spec needs, row-aligned on the common clip set."""
    per_stream_rows = {}
    for stream in spec.streams:
        rows = manifest.select(*stream)
        if not rows:
            raise MissingLayer(f"manifest has no rows for stream {stream}")
        per_stream_rows[stream] = {row.clip_id: row for row in rows}

    first = spec.streams[0]
    common = [
        row.clip_id
        for row in manifest.select(*first)
        if all(row.clip_id in per_stream_rows[s] for s in spec.streams)
    ]
    if not common:
        raise RowMisalignment("streams share no clips")
    for stream in spec.streams[1:]:
        for clip_id in common:
            a = per_stream_rows[first][clip_id]
            b = per_stream_rows[stream][clip_id]
            if (a.label, a.podcast_id) != (b.label, b.podcast_id):
                raise RowMisalignment(
                    f"clip {clip_id} disagrees on label/podcast across streams"
                )

    bundle = {}
    for stream in spec.streams:
        source, layer = stream
        bundle[stream] = build_feature_matrix(
            manifest, source, layer,
            normalize=spec.normalize and source == dataio.ECAPA,
            clip_order=common,
        )
    return bundle


def _fold_indices(part: FeatureMatrix, podcasts: frozenset[str]) -> np.ndarray:
    return np.flatnonzero(np.isin(part.podcast_ids, sorted(podcasts)))


def _run_fold(spec: PipelineSpec, bundle: dict[Stream, FeatureMatrix], fold: Fold,
              fold_idx: int, repeat: int, train_seed: int,
              models_dir: Path | None) -> FoldReport:
    anchor = bundle[spec.streams[0]]
    train_idx = _fold_indices(anchor, fold.train)
    valid_idx = _fold_indices(anchor, fold.valid)
    eval_idx = _fold_indices(anchor, fold.eval)
    train = {s: fm.take(train_idx) for s, fm in bundle.items()}
    valid = {s: fm.take(valid_idx) for s, fm in bundle.items()}
    evald = {s: fm.take(eval_idx) for s, fm in bundle.items()}

    fitted = Pipeline(spec).fit(train, valid, seed=train_seed)
    preds = fitted.predict(evald)
    truth = anchor.labels[eval_idx]
    report = FoldReport(
        fold=fold_idx,
        repeat=repeat,
        metrics=per_class_accuracy(preds, truth),
        confusion=_confusion(preds, truth),
    )
    if models_dir is not None:
        _save_fold_models(fitted, models_dir / f"fold_{fold_idx}_repeat_{repeat}")
    return report


def _save_fold_models(fitted, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for stream, reducer in fitted.reducers.items():
        if reducer is not None:
            save_lda(reducer, out_dir, f"lda_{stream[0]}_L{stream[1]:02d}")
    for key, model in fitted.models.items():
        name = "concat" if key == "concat" else f"{key[0]}_L{key[1]:02d}"
        if isinstance(model, KnnClassifier):
            save_knn(model, out_dir, f"knn_{name}")
        elif isinstance(model, GaussianBackend):
            save_gnb(model, out_dir, f"gnb_{name}")
        elif isinstance(model, TwoBranchClassifier):
            save_two_branch(model, out_dir, f"nn_{name}")
            write_training_curves(model, out_dir / f"curves_{name}.csv")


def run_experiment(
    manifest: dataio.DatasetManifest,
    spec: PipelineSpec,
    *,
    seed: int = 0,
    repeats: int = 1,
    out_dir=None,
    jobs: int = 1,
    save_models: bool = False,
) -> ExperimentResult:
    """Fit and score the pipeline over 10 podcast folds, ``repeats`` times.

    Each repeat reuses the fold plan but trains with seed ``seed + repeat``.
    When ``out_dir`` is given the run writes metrics.csv, per-fold CSVs,
    per-fold confusion matrices, run_meta.txt, and a README describing the
    layout; reruns with identical arguments reproduce identical metric files.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    bundle = load_bundle(manifest, spec)
    anchor = bundle[spec.streams[0]]
    plan = make_folds(anchor.podcast_ids, seed)

    out_path = Path(out_dir) if out_dir is not None else None
    models_dir = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        if save_models:
            models_dir = out_path / "models"

    tasks = [
        (repeat, fold_idx, fold)
        for repeat in range(repeats)
        for fold_idx, fold in enumerate(plan)
    ]

    def execute(task):
        repeat, fold_idx, fold = task
        return _run_fold(spec, bundle, fold, fold_idx, repeat, seed + repeat, models_dir)

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(execute, tasks))
    else:
        reports = [execute(task) for task in tasks]

    table = MetricsTable(reports)
    if out_path is not None:
        _write_run_artifacts(out_path, manifest, spec, plan, table, seed, repeats, jobs)
    return ExperimentResult(spec=spec, plan=plan, metrics=table, out_dir=out_path)


def _write_run_artifacts(out_path: Path, manifest, spec, plan, table, seed, repeats, jobs):
    table.to_csv(out_path / "metrics.csv")

    folds_dir = out_path / "folds"
    folds_dir.mkdir(exist_ok=True)
    for rep in table.reports:
        with open(folds_dir / f"fold_{rep.fold}_repeat_{rep.repeat}.csv", "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "repeat", "n_eval", *METRIC_COLUMNS,
                             *(f"count_{c}" for c in METRIC_COLUMNS[:-1])])
            row = rep.metrics.as_row()
            writer.writerow([
                rep.fold, rep.repeat, rep.metrics.n,
                *(_fmt(row[c]) for c in METRIC_COLUMNS),
                *(int(v) for v in rep.metrics.class_counts),
            ])

    for fold_idx in sorted({r.fold for r in table.reports}):
        confusion = sum(r.confusion for r in table.reports if r.fold == fold_idx)
        with open(out_path / f"confusion_{fold_idx}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred", *dataio.LABEL_NAMES])
            for c, name in enumerate(dataio.LABEL_NAMES):
                writer.writerow([name, *(int(v) for v in confusion[c])])

    _write_run_meta(out_path / "run_meta.txt", manifest, spec, plan, seed, repeats, jobs)
    _write_run_readme(out_path / "README.md")


def _package_version() -> str:
    try:
        return importlib.metadata.version("stutterkit")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _write_run_meta(path: Path, manifest, spec, plan, seed, repeats, jobs) -> None:
    lines = {
        "tool": f"stutterkit {_package_version()}",
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "manifest_root": str(manifest.root),
        "n_manifest_rows": str(len(manifest)),
        "n_podcasts": str(len(manifest.podcasts())),
        "seed": str(seed),
        "repeats": str(repeats),
        "jobs": str(jobs),
        "train_seed_rule": "seed + repeat_index",
        "n_folds": str(N_FOLDS),
        "fold_rotation": "block i eval, block i+1 mod 10 valid, rest train",
        "per_class_metric": "class-wise recall, percent",
        "aggregate": "mean over folds then over repeats; std over fold rows; pooled over all eval clips",
    }
    lines.update({f"spec.{k}": v for k, v in spec.to_meta().items()})
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in lines.items():
            fh.write(f"{key}={value}\n")


_RUN_README = """\
# Run artifacts

- `metrics.csv` - aggregate table: rows mean / std / pooled, columns R, P, B, I, F, TA
  (per-class recall and total accuracy, percent).
- `folds/fold_<i>_repeat_<j>.csv` - one metric row per fold and repeat, with
  per-class evaluation counts.
- `confusion_<i>.csv` - confusion counts for fold i summed over repeats
  (rows true class, columns predicted class).
- `run_meta.txt` - key=value record of the full configuration; sufficient to
  re-execute an identical run (timestamps live only here).
- `layersweep.csv` / `layersweep.svg` - present for layer sweeps: one row per
  w2v2 layer with aggregate metrics, and the rendered line chart.
- `models/fold_<i>_repeat_<j>/` - present when model saving is enabled:
  projection/means tensors and scalar CSVs per stream, classifier state, and
  `curves_*.csv` per-epoch training losses for neural runs.

Tensors use the EMB1 binary format (float32); see the package README.
"""


def _write_run_readme(path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_RUN_README)


def layer_sweep(
    manifest: dataio.DatasetManifest,
    classifier: str,
    *,
    seed: int = 0,
    lda_components: int | None = 4,
    repeats: int = 1,
    out_dir=None,
    jobs: int = 1,
    base_spec: PipelineSpec | None = None,
) -> list[tuple[int, dict[str, float]]]:
    """Run the single-stream experiment for every w2v2 layer 1..13.

    Returns (layer, aggregate-mean metrics) pairs and, when ``out_dir`` is
    given, writes ``layersweep.csv`` plus one run directory per layer.
    """
    out_path = Path(out_dir) if out_dir is not None else None
    series: list[tuple[int, dict[str, float]]] = []
    for layer in dataio.W2V2_LAYERS:
        if not manifest.select(dataio.W2V2, layer):
            raise MissingLayer(f"manifest lacks w2v2 layer {layer}")
    for layer in dataio.W2V2_LAYERS:
        template = base_spec if base_spec is not None else PipelineSpec(
            streams=((dataio.W2V2, 1),), classifier=classifier
        )
        spec = dataclasses.replace(
            template,
            streams=((dataio.W2V2, layer),),
            classifier=classifier,
            fusion="none",
            lda_components=lda_components,
        )
        layer_dir = None if out_path is None else out_path / "layers" / f"L{layer:02d}"
        result = run_experiment(
            manifest, spec, seed=seed, repeats=repeats, out_dir=layer_dir, jobs=jobs
        )
        series.append((layer, result.metrics.mean()))
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(series, out_path / "layersweep.csv")
    return series


def write_sweep_csv(series: Sequence[tuple[int, dict[str, float]]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", *METRIC_COLUMNS])
        for layer, row in series:
            writer.writerow([layer, *(_fmt(row[c]) for c in METRIC_COLUMNS)])


def read_sweep_csv(path) -> list[tuple[int, dict[str, float]]]:
    series = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            values = {
                col: (np.nan if cell == "na" else float(cell))
                for col, cell in zip(header[1:], row[1:])
            }
            series.append((int(row[0]), values))
    return series


def read_metrics_csv(path) -> dict[str, dict[str, float]]:
    stats = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            stats[row[0]] = {
                col: (np.nan if cell == "na" else float(cell))
                for col, cell in zip(header[1:], row[1:])
            }
    return stats


def render_metrics_text(stats: dict[str, dict[str, float]]) -> str:
    """Fixed-width text table in the report's column order."""
    lines = ["{:<8}".format("stat") + "".join(f"{c:>10}" for c in METRIC_COLUMNS)]
    for stat, row in stats.items():
        cells = []
        for col in METRIC_COLUMNS:
            value = row.get(col, np.nan)
            cells.append("       na " if np.isnan(value) else f"{value:>10.2f}")
        lines.append(f"{stat:<8}" + "".join(cells))
    return "\n".join(lines)


_SERIES_COLORS = {
    "R": "#d62728", "P": "#ff7f0e", "B": "#2ca02c",
    "I": "#9467bd", "F": "#1f77b4", "TA": "#000000",
}


def render_sweep_svg(series: Sequence[tuple[int, dict[str, float]]]) -> str:
    """Line chart of per-layer accuracies as a self-contained SVG string."""
    width, height = 720, 420
    left, right, top, bottom = 60, 110, 20, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    layers = [layer for layer, _ in series]
    x_min, x_max = min(layers), max(layers)

    def x_pos(layer: float) -> float:
        if x_max == x_min:
            return left + plot_w / 2
        return left + (layer - x_min) / (x_max - x_min) * plot_w

    def y_pos(value: float) -> float:
        return top + (100.0 - value) / 100.0 * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for tick in range(0, 101, 20):
        y = y_pos(tick)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{tick}</text>')
    for layer in layers:
        x = x_pos(layer)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" '
            f'stroke="#000000"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle">L{layer}</text>'
        )
    parts.append(
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#000000"/>'
    )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle">'
        "contextual layer</text>"
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">accuracy (%)</text>'
    )
    for i, col in enumerate(METRIC_COLUMNS):
        color = _SERIES_COLORS[col]
        points = [
            (x_pos(layer), y_pos(row[col]))
            for layer, row in series
            if not np.isnan(row.get(col, np.nan))
        ]
        if not points:
            continue
        stroke_width = 2.5 if col == "TA" else 1.5
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in points)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{stroke_width}" '
            f'points="{path}"/>'
        )
        for x, y in points:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{color}"/>')
        ly = top + 16 + i * 18
        lx = left + plot_w + 14
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="{stroke_width}"/>'
        )
        parts.append(f'<text x="{lx + 28}" y="{ly}">{col}</text>')
    parts.append("</svg>")
    return "\n".join(parts)

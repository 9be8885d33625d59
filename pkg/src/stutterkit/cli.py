"""Command-line entry point.

Subcommands: ``validate`` a manifest, ``synth`` a synthetic dataset, ``run``
an experiment, ``sweep`` the w2v2 layers, and ``report`` a finished run
directory as a text table plus an SVG chart of any layer sweep. Exit codes:
0 success, 1 for usage or validation errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dataio, evalharness
from .errors import InvalidArgument, InvalidSpec, StutterkitError
from .fusion import PipelineSpec

_USAGE_EXIT = 1
_RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="stutterkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_validate = sub.add_parser("validate",
                                help="check a manifest and its embedding files")
    p_validate.add_argument("manifest", help="manifest CSV path")

    p_synth = sub.add_parser("synth",
                             help="generate a synthetic embedding dataset")
    p_synth.add_argument("--podcasts", type=int, required=True)
    p_synth.add_argument("--clips", type=int, required=True, help="clips per podcast")
    p_synth.add_argument("--sep", type=float, required=True, help="class mean separation")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--layers", type=_parse_int_list, default=(1, 7, 11),
                         help="w2v2 layers to emit (comma-separated, default 1,7,11)")
    p_synth.add_argument("--signal-layers", type=_parse_int_list, default=None,
                         help="layers that carry class signal (default: all emitted)")
    p_synth.add_argument("--weights", type=_parse_float_list, default=None,
                         help="five class weights R,P,B,I,F (default fluent-heavy)")
    p_synth.add_argument("--no-ecapa", action="store_true", help="skip the ecapa stream")

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--source", choices=("w2v2", "ecapa", "both"), default="w2v2")
    p_run.add_argument("--layer", type=int, default=11, help="w2v2 layer for single-layer runs")
    p_run.add_argument("--layers", type=_parse_int_list, default=None,
                       help="w2v2 layers for concat fusion, e.g. 1,7,11")
    p_run.add_argument("--clf", choices=("knn", "gnb", "nn"), default="gnb")
    p_run.add_argument("--fuse", choices=("none", "score", "concat"), default="none")
    p_run.add_argument("--alpha", type=float, default=0.9)
    p_run.add_argument("--lda", type=int, default=4,
                       help="LDA components per stream; 0 disables LDA")
    p_run.add_argument("--normalize", action="store_true",
                       help="magnitude-normalize ecapa vectors")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--repeats", type=int, default=1)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--save-models", action="store_true")
    p_run.add_argument("--k", type=int, default=5, help="KNN neighbors")
    p_run.add_argument("--p", type=float, default=2.0, help="Minkowski order")
    p_run.add_argument("--priors", choices=("empirical", "uniform"), default="empirical")
    p_run.add_argument("--hidden", type=_parse_int_list, default=(256, 64))
    p_run.add_argument("--lr", type=float, default=1e-2)
    p_run.add_argument("--batch-size", type=int, default=128)
    p_run.add_argument("--max-epochs", type=int, default=200)
    p_run.add_argument("--patience", type=int, default=7)
    p_run.add_argument("--shrinkage", type=float, default=1e-4)

    p_sweep = sub.add_parser("sweep",
                             help="run every w2v2 layer 1..13")
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument("--clf", choices=("knn", "gnb", "nn"), default="gnb")
    p_sweep.add_argument("--lda", type=int, default=4)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", required=True)

    p_report = sub.add_parser("report",
                              help="render a run directory")
    p_report.add_argument("--run", required=True, help="run directory")
    return parser


def _streams_from_args(args) -> tuple[tuple[str, int], ...]:
    if args.fuse == "score":
        if args.source != "both":
            raise InvalidSpec(
                "--fuse score combines both sources; pass --source both"
            )
        return ((dataio.W2V2, args.layer), (dataio.ECAPA, 0))
    if args.fuse == "concat":
        if args.layers:
            streams = tuple((dataio.W2V2, layer) for layer in args.layers)
            if args.source == "both":
                streams = streams + ((dataio.ECAPA, 0),)
            return streams
        if args.source == "both":
            return ((dataio.W2V2, args.layer), (dataio.ECAPA, 0))
        return ((dataio.W2V2, args.layer),)
    if args.source == "ecapa":
        return ((dataio.ECAPA, 0),)
    if args.source == "both":
        return ((dataio.W2V2, args.layer), (dataio.ECAPA, 0))
    return ((dataio.W2V2, args.layer),)


def _spec_from_args(args) -> PipelineSpec:
    hidden = tuple(args.hidden)
    if len(hidden) != 2:
        raise InvalidSpec("--hidden expects exactly two widths, e.g. 256,64")
    return PipelineSpec(
        streams=_streams_from_args(args),
        classifier=args.clf,
        fusion=args.fuse,
        alpha=args.alpha,
        lda_components=None if args.lda == 0 else args.lda,
        shrinkage=args.shrinkage,
        normalize=args.normalize,
        knn_k=args.k,
        knn_p=args.p,
        gnb_priors=args.priors,
        nn_hidden=(hidden[0], hidden[1]),
        nn_lr=args.lr,
        nn_batch_size=args.batch_size,
        nn_max_epochs=args.max_epochs,
        nn_patience=args.patience,
    )


def _cmd_validate(args) -> int:
    manifest = dataio.load_manifest(args.manifest, check_paths=True)
    podcasts = manifest.podcasts()
    counts = {name: 0 for name in dataio.LABEL_NAMES}
    for row in manifest:
        counts[row.label.name.lower()] += 1
    print(f"manifest OK: {len(manifest)} rows, {len(podcasts)} podcasts")
    print(f"w2v2 layers: {', '.join(str(l) for l in manifest.layers()) or 'none'}")
    print("label counts: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def _cmd_synth(args) -> int:
    manifest = dataio.generate_synthetic(
        args.out,
        num_podcasts=args.podcasts,
        clips_per_podcast=args.clips,
        class_sep=args.sep,
        seed=args.seed,
        layers=args.layers,
        include_ecapa=not args.no_ecapa,
        signal_layers=args.signal_layers,
        class_weights=args.weights,
    )
    print(f"wrote {len(manifest)} rows under {args.out} (manifest.csv)")
    return 0


def _cmd_run(args) -> int:
    spec = _spec_from_args(args)
    manifest = dataio.load_manifest(args.manifest, check_paths=True)
    result = evalharness.run_experiment(
        manifest, spec,
        seed=args.seed, repeats=args.repeats,
        out_dir=args.out, jobs=args.jobs, save_models=args.save_models,
    )
    mean = result.metrics.mean()
    print(f"run complete -> {args.out}")
    print(evalharness.render_metrics_text({"mean": mean}))
    return 0


def _cmd_sweep(args) -> int:
    manifest = dataio.load_manifest(args.manifest, check_paths=True)
    series = evalharness.layer_sweep(
        manifest, args.clf,
        seed=args.seed,
        lda_components=None if args.lda == 0 else args.lda,
        repeats=args.repeats,
        out_dir=args.out,
        jobs=args.jobs,
    )
    print(f"sweep complete -> {args.out} ({len(series)} layers)")
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    metrics_path = run_dir / "metrics.csv"
    sweep_path = run_dir / "layersweep.csv"
    if not metrics_path.exists() and not sweep_path.exists():
        raise InvalidArgument(f"{run_dir} holds neither metrics.csv nor layersweep.csv")
    if metrics_path.exists():
        stats = evalharness.read_metrics_csv(metrics_path)
        print(evalharness.render_metrics_text(stats))
    if sweep_path.exists():
        series = evalharness.read_sweep_csv(sweep_path)
        svg = evalharness.render_sweep_svg(series)
        svg_path = run_dir / "layersweep.svg"
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        print(f"layer sweep chart -> {svg_path}")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "synth": _cmd_synth,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except StutterkitError as exc:
        if isinstance(exc, ValueError):
            print(f"error: {exc}", file=sys.stderr)
            return _USAGE_EXIT
        print(f"runtime failure: {exc}", file=sys.stderr)
        return _RUNTIME_EXIT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _RUNTIME_EXIT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

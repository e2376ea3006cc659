"""Command-line interface.

Exit codes: 0 success, 1 configuration or input error, 2 experiment finished
with failed cells. Heavy modules import inside their subcommands so
``lecturevision --help`` stays instant.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError, LectureVisionError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _print_metrics(metrics, sensitivity=None) -> None:
    d = metrics.as_dict()
    print(f"frames {d['n_images']}  objects {d['n_ground_truth']}  detections {d['n_detections']}")
    print(
        f"ap50 {d['ap50']:.4f}  ap75 {d['ap75']:.4f}  ap {d['ap']:.4f}  "
        f"precision {d['precision']:.4f}  recall {d['recall']:.4f}  f1 {d['f1']:.4f}"
        f"  (operating confidence {d['operating_confidence']:g})"
    )
    if sensitivity:
        for conf, f1 in sensitivity:
            print(f"  f1 at confidence {conf:.2f}: {f1:.4f}")


def _cmd_stats(args) -> int:
    from .formats import load_dataset

    ds = load_dataset(args.manifest)
    s = ds.stats
    b01, b23, b4 = s.bucket_fractions()
    print(f"dataset {ds.name}: {s.n_images} frames, {s.n_objects} objects "
          f"({s.objects_per_image:.2f} per frame)")
    print(f"objects/frame buckets: 0-1 {b01:.1%}  2-3 {b23:.1%}  4+ {b4:.1%}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .formats import load_dataset
    from .predictions import read_predictions

    ds = load_dataset(args.manifest)
    sets = read_predictions(args.predictions)
    metrics = evaluate(ds, sets, args.confidence)
    sensitivity = None
    if args.sensitivity:
        sensitivity = [
            (c, evaluate(ds, sets, c).f1) for c in (0.25, 0.5, 0.75)
        ]
    _print_metrics(metrics, sensitivity)
    if args.json:
        Path(args.json).write_text(json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_split(args) -> int:
    from .dataset_ops import SplitSpec, split
    from .formats import load_dataset, save_dataset

    ratios = tuple(float(r) for r in args.ratios.split(","))
    names = tuple(args.names.split(","))
    ds = load_dataset(args.manifest)
    parts = split(ds, SplitSpec(ratios=ratios, names=names, seed=args.seed))
    out = Path(args.out)
    for part, name in zip(parts, names):
        manifest = save_dataset(part, out / name)
        print(f"{name}: {len(part)} frames -> {manifest}")
    return EXIT_OK


def _cmd_kfold(args) -> int:
    from .dataset_ops import kfold
    from .formats import load_dataset

    ds = load_dataset(args.manifest)
    plan = kfold(ds, args.k, args.seed)
    plan.save(args.out)
    print(f"fold plan for {ds.name}: k={args.k} sizes={plan.fold_sizes()} -> {args.out}")
    return EXIT_OK


def _cmd_merge(args) -> int:
    from .dataset_ops import merge
    from .formats import load_dataset, save_dataset

    datasets = [load_dataset(m) for m in args.manifests]
    merged = merge(datasets, args.name)
    manifest = save_dataset(merged, args.out)
    print(f"{args.name}: {len(merged)} frames from {len(datasets)} datasets -> {manifest}")
    return EXIT_OK


def _cmd_dedup(args) -> int:
    from .dedup import dedup, write_dedup_log
    from .formats import load_dataset, save_dataset

    ds = load_dataset(args.manifest)
    kept, removed = dedup(ds, args.max_hamming)
    manifest = save_dataset(kept, args.out)
    print(f"kept {len(kept)}/{len(ds)} frames -> {manifest}")
    if args.log:
        write_dedup_log(removed, args.log)
        print(f"audit log -> {args.log}")
    return EXIT_OK


def _cmd_detect(args) -> int:
    from .dedup import load_image_rgb
    from .formats import load_dataset
    from .heuristic import HeuristicParams, detect
    from .predictions import PredictionSet, write_predictions

    ds = load_dataset(args.manifest)
    params = HeuristicParams(
        bg_tolerance=args.bg_tolerance,
        min_area=args.min_area,
    )
    sets = []
    for frame in ds.frames:
        detections = detect(load_image_rgb(frame.image_path), params)
        sets.append(PredictionSet(frame_id=frame.frame_id, detections=tuple(detections)))
    write_predictions(sets, args.out)
    total = sum(len(s.detections) for s in sets)
    print(f"{total} detections over {len(sets)} frames -> {args.out}")
    return EXIT_OK


def _load_backend(args):
    from .backend import BackendRef
    from .mock_backend import mock_backend

    if args.mock:
        return mock_backend(args.mock)
    if not args.backend:
        raise ConfigError("pass --backend FILE or --mock BEHAVIOR")
    return BackendRef.from_dict(json.loads(Path(args.backend).read_text()))


def _cmd_autolabel(args) -> int:
    from .backend import ModelRef
    from .enrichment import auto_label
    from .formats import save_dataset

    backend = _load_backend(args)
    model = ModelRef(path=Path(args.model))
    ds = auto_label(backend, model, Path(args.unlabeled), args.threshold)
    manifest = save_dataset(ds, args.out, fmt="coco_document")
    n_empty = sum(1 for f in ds.frames if f.n_objects == 0)
    print(
        f"auto-labeled {len(ds)} frames ({ds.stats.n_objects} objects, "
        f"{n_empty} empty) -> {manifest}"
    )
    return EXIT_OK


def _cmd_experiment(args) -> int:
    from .experiments import ExperimentConfig, run_experiment

    config = ExperimentConfig.from_json_file(args.config)
    report = run_experiment(config)
    failed = report.failed_cells
    print(f"{len(report.cells)} cells, {len(failed)} failed -> "
          f"{Path(config.output_dir) / 'report.json'}")
    for key in failed:
        print(f"  failed: {key}: {report.cells[key].get('error', '')}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_report(args) -> int:
    from .experiments import ExperimentReport, emit_report

    report = ExperimentReport.from_json_file(args.report)
    formats = args.formats.split(",")
    written = emit_report(report, formats, args.out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lecturevision",
        description="detection datasets, metrics, and enrichment for lecture videos",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("manifest")
    p.add_argument("predictions")
    p.add_argument("--confidence", type=float, default=0.5)
    p.add_argument("--sensitivity", action="store_true",
                   help="also report F1 at confidence 0.25 and 0.75")
    p.add_argument("--json", help="write metrics JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("split", help="seeded ratio split")
    p.add_argument("manifest")
    p.add_argument("--ratios", required=True, help="e.g. 0.7,0.1,0.2")
    p.add_argument("--names", required=True, help="e.g. train,val,test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("kfold", help="build a cross-validation fold plan")
    p.add_argument("manifest")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_kfold)

    p = sub.add_parser("merge", help="merge datasets under namespaced frame ids")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("dedup", help="drop near-duplicate frames")
    p.add_argument("manifest")
    p.add_argument("--max-hamming", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write removal audit CSV here")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("detect", help="training-free slide-object detector")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--bg-tolerance", type=float, default=12.0)
    p.add_argument("--min-area", type=int, default=64)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("autolabel", help="annotate an unlabeled corpus with a model")
    p.add_argument("unlabeled", help="manifest without annotation paths")
    p.add_argument("--model", required=True, help="trained model directory")
    p.add_argument("--backend", help="backend JSON description")
    p.add_argument("--mock", help="use the mock backend with this behavior")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_autolabel)

    p = sub.add_parser("experiment", help="run an experiment config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="render an experiment report")
    p.add_argument("report")
    p.add_argument("--formats", default="csv", help="comma list: json,csv,svg_bars")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LectureVisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

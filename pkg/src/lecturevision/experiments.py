"""Experiment harness: declarative configs, cell grids, reproducible reports.

An experiment is a JSON config naming datasets, a backend, and a kind. Each
kind expands into a grid of cells; every cell trains and/or evaluates one
model and yields one metrics row. Cells run in a bounded worker pool; a
failing cell is recorded with its error and the rest continue. Reports are
canonical JSON (sorted keys), so two runs of the same config differ only in
wall-clock time and environment fingerprint.

Kinds:

* single: per dataset, train on its train split, score its test split;
* cross_dataset_matrix: train per dataset, score every dataset's test split;
* joint_training: one model on all train splits merged, plus a variant with
  each train split capped to a fixed frame budget, scored per dataset;
* data_fraction: growing seeded fractions of one target's train split,
  directly and after pretraining on the other datasets;
* enrichment: the strategies of the enrichment module on one labeled corpus;
* incremental: one strategy at growing auto-pool sizes.

All splits are 70/10/20 train/val/test, seeded per dataset.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .backend import BackendRef, Hyperparameters, INIT_PRETRAINED, ModelRef
from .data import Dataset
from .dataset_ops import SplitSpec, merge, split
from .enrichment import (
    EnrichmentConfig,
    build_auto_pool,
    incremental_enrichment,
    run_strategy,
    train_step,
)
from .errors import ConfigError, LectureVisionError
from .evaluation import MetricsReport, evaluate
from .formats import load_dataset, save_dataset
from .mock_backend import mock_backend
from .predictions import PredictionSet
from .rng import derive_seed, sample_prefix
from .backend import run_predict

logger = logging.getLogger(__name__)

KINDS = (
    "single",
    "cross_dataset_matrix",
    "joint_training",
    "data_fraction",
    "enrichment",
    "incremental",
)

DEFAULT_FRACTIONS = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_CAP = 1000
TRAIN_VAL_TEST = (0.7, 0.1, 0.2)

REPORT_FORMATS = ("json", "csv", "svg_bars")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    datasets: Dict[str, Path]
    backend: BackendRef
    output_dir: Path
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    seed: int = 0
    workers: int = 2
    target: Optional[str] = None
    fractions: Tuple[float, ...] = DEFAULT_FRACTIONS
    cap: int = DEFAULT_CAP
    strategy: str = "comprehensive"
    strategies: Tuple[str, ...] = ("baseline", "comprehensive", "progressive")
    increments: Tuple[int, ...] = ()
    unlabeled_manifest: Optional[Path] = None
    confidence_threshold: float = 0.5
    folds: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.datasets:
            raise ConfigError("experiment needs at least one dataset")
        for name, manifest in self.datasets.items():
            if not Path(manifest).is_file():
                raise ConfigError(f"dataset {name!r}: manifest not found: {manifest}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.kind == "data_fraction":
            if self.target is None and len(self.datasets) != 1:
                raise ConfigError("data_fraction needs a target dataset")
            for f in self.fractions:
                if not (0.0 < f <= 1.0):
                    raise ConfigError(f"fractions must be in (0, 1], got {f}")
        if self.kind == "joint_training" and self.cap < 1:
            raise ConfigError(f"cap must be >= 1, got {self.cap}")
        if self.kind in ("enrichment", "incremental"):
            if len(self.datasets) != 1 and self.target is None:
                raise ConfigError(f"{self.kind} needs a target labeled dataset")
            if self.unlabeled_manifest is not None and not Path(self.unlabeled_manifest).is_file():
                raise ConfigError(
                    f"unlabeled manifest not found: {self.unlabeled_manifest}"
                )
        if self.kind == "incremental" and not self.increments:
            raise ConfigError("incremental experiments need increments")

    @property
    def target_name(self) -> str:
        if self.target is not None:
            if self.target not in self.datasets:
                raise ConfigError(f"target {self.target!r} not among datasets")
            return self.target
        return next(iter(self.datasets))

    def echo(self) -> dict:
        """Config as it went in, for embedding in reports."""
        doc = {
            "kind": self.kind,
            "datasets": {k: str(v) for k, v in sorted(self.datasets.items())},
            "backend": self.backend.as_dict(),
            "output_dir": str(self.output_dir),
            "hyperparameters": {
                "learning_rate": self.hyperparameters.learning_rate,
                "batch_size": self.hyperparameters.batch_size,
                "epochs": self.hyperparameters.epochs,
                "frozen_blocks": self.hyperparameters.frozen_blocks,
            },
            "seed": self.seed,
            "workers": self.workers,
        }
        if self.kind == "data_fraction":
            doc["target"] = self.target_name
            doc["fractions"] = list(self.fractions)
        if self.kind == "joint_training":
            doc["cap"] = self.cap
        if self.kind == "enrichment":
            doc["target"] = self.target_name
            doc["strategies"] = list(self.strategies)
            doc["confidence_threshold"] = self.confidence_threshold
            doc["folds"] = self.folds
            if self.unlabeled_manifest is not None:
                doc["unlabeled_manifest"] = str(self.unlabeled_manifest)
        if self.kind == "incremental":
            doc["target"] = self.target_name
            doc["strategy"] = self.strategy
            doc["increments"] = list(self.increments)
            doc["confidence_threshold"] = self.confidence_threshold
            doc["folds"] = self.folds
            if self.unlabeled_manifest is not None:
                doc["unlabeled_manifest"] = str(self.unlabeled_manifest)
        return doc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        base = path.resolve().parent

        def resolve(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else (base / q)

        try:
            backend_doc = doc["backend"]
            if "mock" in backend_doc:
                m = backend_doc["mock"]
                backend = mock_backend(
                    m.get("behavior", "echo_gt"),
                    noise=float(m.get("noise", 0.0)),
                    seed=int(m.get("seed", 0)),
                    fixed_file=resolve(m["file"]) if m.get("file") else None,
                )
            else:
                backend = BackendRef.from_dict(backend_doc)
            hp_doc = doc.get("hyperparameters", {})
            hp = Hyperparameters(
                learning_rate=float(hp_doc.get("learning_rate", 0.001)),
                batch_size=int(hp_doc.get("batch_size", 8)),
                epochs=int(hp_doc.get("epochs", 30)),
                frozen_blocks=int(hp_doc.get("frozen_blocks", 3)),
            )
            return cls(
                kind=doc["kind"],
                datasets={k: resolve(v) for k, v in doc["datasets"].items()},
                backend=backend,
                output_dir=resolve(doc["output_dir"]),
                hyperparameters=hp,
                seed=int(doc.get("seed", 0)),
                workers=int(doc.get("workers", 2)),
                target=doc.get("target"),
                fractions=tuple(doc.get("fractions", DEFAULT_FRACTIONS)),
                cap=int(doc.get("cap", DEFAULT_CAP)),
                strategy=doc.get("strategy", "comprehensive"),
                strategies=tuple(doc.get("strategies", ("baseline", "comprehensive", "progressive"))),
                increments=tuple(int(c) for c in doc.get("increments", ())),
                unlabeled_manifest=(
                    resolve(doc["unlabeled_manifest"]) if doc.get("unlabeled_manifest") else None
                ),
                confidence_threshold=float(doc.get("confidence_threshold", 0.5)),
                folds=int(doc.get("folds", 5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: invalid experiment config: {exc}") from exc


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    config: dict
    cells: Dict[str, dict]  # key -> {"metrics": {...}} or {"error": ..., "error_type": ...}
    wall_clock_s: float
    fingerprint: dict

    @property
    def failed_cells(self) -> List[str]:
        return sorted(k for k, v in self.cells.items() if "error" in v)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "cells": self.cells,
            "wall_clock_s": self.wall_clock_s,
            "fingerprint": self.fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentReport":
        try:
            doc = json.loads(Path(path).read_text())
            return cls(
                kind=doc["kind"],
                config=doc["config"],
                cells=doc["cells"],
                wall_clock_s=float(doc["wall_clock_s"]),
                fingerprint=doc["fingerprint"],
            )
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"cannot load report {path}: {exc}") from exc


def _dataset_digest(manifest_path: Path) -> str:
    """Content hash of a manifest and every annotation file it references."""
    h = hashlib.sha256()
    h.update(manifest_path.read_bytes())
    try:
        doc = json.loads(manifest_path.read_text())
        base = manifest_path.resolve().parent
        paths = sorted(
            str(f["annotation_path"])
            for f in doc.get("frames", [])
            if isinstance(f, dict) and f.get("annotation_path")
        )
        for rel in dict.fromkeys(paths):
            p = base / rel
            if p.is_file():
                h.update(p.read_bytes())
    except (json.JSONDecodeError, TypeError):
        pass  # digest of the raw bytes still stands
    return h.hexdigest()


def _fingerprint(config: ExperimentConfig) -> dict:
    return {
        "tool": "lecturevision",
        "version": __version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "seed": config.seed,
        "dataset_digests": {
            name: _dataset_digest(Path(path))
            for name, path in sorted(config.datasets.items())
        },
    }


def _three_way(dataset: Dataset, seed: int) -> Tuple[Dataset, Dataset, Dataset]:
    spec = SplitSpec(ratios=TRAIN_VAL_TEST, names=("train", "val", "test"), seed=seed)
    parts = split(dataset, spec)
    return parts[0], parts[1], parts[2]


Cell = Tuple[Tuple[str, ...], Callable[[], MetricsReport]]


def _run_cells(cells: Sequence[Cell], workers: int) -> Dict[str, dict]:
    """Execute cells in a bounded pool; record failures instead of aborting."""

    def guarded(thunk: Callable[[], MetricsReport]) -> dict:
        try:
            return {"metrics": thunk().as_dict()}
        except LectureVisionError as exc:
            logger.warning("cell failed: %s", exc)
            return {"error": str(exc), "error_type": type(exc).__name__}

    results: Dict[str, dict] = {}
    with ThreadPoolExecutor(max_workers=min(workers, max(1, len(cells)))) as pool:
        futures = {"/".join(key): pool.submit(guarded, thunk) for key, thunk in cells}
        for key, future in futures.items():
            results[key] = future.result()
    return results


def _eval_with_model(
    config: ExperimentConfig,
    model: ModelRef,
    test: Dataset,
    cell_dir: Path,
) -> MetricsReport:
    manifest = save_dataset(test, cell_dir / "test")
    sets: List[PredictionSet] = run_predict(
        config.backend, model.path, manifest, cell_dir / "predictions.jsonl"
    )
    return evaluate(test, sets)


def _train_on(
    config: ExperimentConfig,
    init,
    train: Dataset,
    val: Dataset,
    work: Path,
    step: str,
) -> ModelRef:
    model, _ = train_step(
        config.backend, init, train, val, config.hyperparameters,
        config.seed, work, step,
    )
    return model


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Expand the config into cells, run them, and persist the report."""
    started = time.monotonic()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = out / "work"
    work.mkdir(exist_ok=True)

    datasets = {name: load_dataset(path) for name, path in config.datasets.items()}
    names = sorted(datasets)
    splits = {
        name: _three_way(datasets[name], derive_seed(config.seed, "split", name))
        for name in names
    }

    cells: List[Cell] = []

    if config.kind == "single":
        def single_cell(name: str) -> Callable[[], MetricsReport]:
            def thunk() -> MetricsReport:
                train, val, test = splits[name]
                model = _train_on(config, INIT_PRETRAINED, train, val, work / name, "train")
                return _eval_with_model(config, model, test, work / name)
            return thunk

        cells = [((name,), single_cell(name)) for name in names]
        results = _run_cells(cells, config.workers)

    elif config.kind == "cross_dataset_matrix":
        # Phase 1: one model per dataset. A failed train fails its whole row.
        models: Dict[str, ModelRef] = {}
        train_errors: Dict[str, LectureVisionError] = {}
        for name in names:
            train, val, _ = splits[name]
            try:
                models[name] = _train_on(
                    config, INIT_PRETRAINED, train, val, work / f"row-{name}", "train"
                )
            except LectureVisionError as exc:
                logger.warning("training on %s failed: %s", name, exc)
                train_errors[name] = exc

        def matrix_cell(row: str, col: str) -> Callable[[], MetricsReport]:
            def thunk() -> MetricsReport:
                if row in train_errors:
                    raise train_errors[row]
                _, _, test = splits[col]
                return _eval_with_model(
                    config, models[row], test, work / f"cell-{row}-{col}"
                )
            return thunk

        cells = [((row, col), matrix_cell(row, col)) for row in names for col in names]
        results = _run_cells(cells, config.workers)

    elif config.kind == "joint_training":
        def joint_cells() -> List[Cell]:
            variants: Dict[str, ModelRef] = {}
            variant_errors: Dict[str, LectureVisionError] = {}
            for variant in ("full", f"cap{config.cap}"):
                train_parts = []
                for name in names:
                    train, _, _ = splits[name]
                    if variant != "full" and len(train) > config.cap:
                        picked = sample_prefix(
                            train.frames, config.cap,
                            derive_seed(config.seed, "cap", name),
                        )
                        train = Dataset(train.name, tuple(picked))
                    train_parts.append(train)
                merged_train = merge(train_parts, f"joint-{variant}-train")
                merged_val = merge([splits[n][1] for n in names], f"joint-{variant}-val")
                try:
                    variants[variant] = _train_on(
                        config, INIT_PRETRAINED, merged_train, merged_val,
                        work / f"joint-{variant}", "train",
                    )
                except LectureVisionError as exc:
                    logger.warning("joint training (%s) failed: %s", variant, exc)
                    variant_errors[variant] = exc

            def cell(variant: str, name: str) -> Callable[[], MetricsReport]:
                def thunk() -> MetricsReport:
                    if variant in variant_errors:
                        raise variant_errors[variant]
                    _, _, test = splits[name]
                    return _eval_with_model(
                        config, variants[variant], test, work / f"joint-{variant}-{name}"
                    )
                return thunk

            return [
                ((variant, name), cell(variant, name))
                for variant in ("full", f"cap{config.cap}")
                for name in names
            ]

        results = _run_cells(joint_cells(), config.workers)

    elif config.kind == "data_fraction":
        target = config.target_name
        others = [n for n in names if n != target]
        t_train, t_val, t_test = splits[target]
        order_seed = derive_seed(config.seed, "fraction", target)

        pretrain_model: Optional[ModelRef] = None
        pretrain_error: Optional[LectureVisionError] = None
        if others:
            try:
                pre_train = merge([splits[n][0] for n in others], "pretrain-train")
                pre_val = merge([splits[n][1] for n in others], "pretrain-val")
                pretrain_model = _train_on(
                    config, INIT_PRETRAINED, pre_train, pre_val, work / "pretrain", "train"
                )
            except LectureVisionError as exc:
                logger.warning("pretraining failed: %s", exc)
                pretrain_error = exc

        def fraction_subset(fraction: float) -> Dataset:
            count = max(1, round(fraction * len(t_train)))
            picked = sample_prefix(t_train.frames, count, order_seed)
            return Dataset(f"{t_train.name}@{fraction:g}", tuple(picked))

        def fraction_cell(scenario: str, fraction: float) -> Callable[[], MetricsReport]:
            def thunk() -> MetricsReport:
                subset = fraction_subset(fraction)
                tag = f"{scenario}-{int(round(fraction * 100))}"
                if scenario == "direct":
                    model = _train_on(
                        config, INIT_PRETRAINED, subset, t_val, work / tag, "train"
                    )
                else:
                    if pretrain_error is not None:
                        raise pretrain_error
                    model = _train_on(
                        config, pretrain_model, subset, t_val, work / tag, "train"
                    )
                return _eval_with_model(config, model, t_test, work / tag)
            return thunk

        scenarios = ["direct"] + (["transfer"] if others else [])
        cells = [
            ((scenario, f"{int(round(fraction * 100))}pct"), fraction_cell(scenario, fraction))
            for scenario in scenarios
            for fraction in config.fractions
        ]
        results = _run_cells(cells, config.workers)

    elif config.kind == "enrichment":
        labeled = datasets[config.target_name]
        base_cfg = EnrichmentConfig(
            labeled=labeled,
            strategy="baseline",
            unlabeled_manifest=config.unlabeled_manifest,
            confidence_threshold=config.confidence_threshold,
            hyperparameters=config.hyperparameters,
            seed=config.seed,
            folds=config.folds,
        )
        auto_pool: Optional[Dataset] = None
        pool_error: Optional[LectureVisionError] = None
        if any(s != "baseline" for s in config.strategies):
            try:
                auto_pool = build_auto_pool(base_cfg, config.backend, work / "pool")
            except LectureVisionError as exc:
                logger.warning("auto pool construction failed: %s", exc)
                pool_error = exc

        def strategy_cell(strategy: str) -> Callable[[], MetricsReport]:
            def thunk() -> MetricsReport:
                if strategy != "baseline" and pool_error is not None:
                    raise pool_error
                cfg = EnrichmentConfig(
                    labeled=labeled,
                    strategy=strategy,
                    unlabeled_manifest=config.unlabeled_manifest,
                    confidence_threshold=config.confidence_threshold,
                    hyperparameters=config.hyperparameters,
                    seed=config.seed,
                    folds=config.folds,
                )
                result = run_strategy(
                    cfg, config.backend, work / strategy,
                    auto_dataset=auto_pool if strategy != "baseline" else None,
                )
                return result.metrics
            return thunk

        cells = [((strategy,), strategy_cell(strategy)) for strategy in config.strategies]
        results = _run_cells(cells, config.workers)

    else:  # incremental
        labeled = datasets[config.target_name]
        cfg = EnrichmentConfig(
            labeled=labeled,
            strategy=config.strategy,
            unlabeled_manifest=config.unlabeled_manifest,
            confidence_threshold=config.confidence_threshold,
            hyperparameters=config.hyperparameters,
            seed=config.seed,
            folds=config.folds,
        )
        results = {}
        try:
            outcomes = incremental_enrichment(
                cfg, config.backend, list(config.increments), work / "incremental"
            )
            for count, result in outcomes:
                results[f"{config.strategy}/auto{count}"] = {
                    "metrics": result.metrics.as_dict()
                }
        except LectureVisionError as exc:
            logger.warning("incremental run failed: %s", exc)
            for count in config.increments:
                results[f"{config.strategy}/auto{count}"] = {
                    "error": str(exc),
                    "error_type": type(exc).__name__,
                }

    report = ExperimentReport(
        kind=config.kind,
        config=config.echo(),
        cells=results,
        wall_clock_s=time.monotonic() - started,
        fingerprint=_fingerprint(config),
    )
    (out / "report.json").write_text(report.to_json())
    return report


_CSV_METRICS = (
    "ap50", "ap75", "ap", "precision", "recall", "f1",
    "n_images", "n_ground_truth", "n_detections",
)


def emit_report(
    report: ExperimentReport,
    formats: Sequence[str],
    out_dir: str | Path,
) -> List[Path]:
    """Write the report in the requested formats; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for fmt in formats:
        if fmt not in REPORT_FORMATS:
            raise ConfigError(f"unknown report format {fmt!r}; know {REPORT_FORMATS}")
        if fmt == "json":
            path = out / "report.json"
            path.write_text(report.to_json())
        elif fmt == "csv":
            path = out / "cells.csv"
            lines = ["cell," + ",".join(_CSV_METRICS) + ",status,error"]
            for key in sorted(report.cells):
                cell = report.cells[key]
                if "metrics" in cell:
                    m = cell["metrics"]
                    values = ",".join(repr(m[k]) for k in _CSV_METRICS)
                    lines.append(f"{key},{values},ok,")
                else:
                    blank = "," * (len(_CSV_METRICS) - 1)
                    error = str(cell.get("error", "")).replace(",", ";").replace("\n", " ")
                    lines.append(f"{key},{blank},failed,{error}")
            path.write_text("\n".join(lines) + "\n")
        else:
            path = out / "bars.svg"
            path.write_text(_render_bars_svg(report))
        written.append(path)
    return written


def _render_bars_svg(report: ExperimentReport) -> str:
    """Grouped bar chart of AP50 and AP per cell, no external dependencies."""
    keys = sorted(report.cells)
    group_w = 64
    margin_left, margin_top = 60, 30
    plot_h = 220
    width = margin_left + 20 + group_w * max(1, len(keys))
    height = margin_top + plot_h + 90
    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin_left}" y="18" font-size="13">{report.kind} '
        f'(seed {report.config.get("seed", "?")})</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = margin_top + plot_h * (1.0 - tick)
        parts.append(
            f'<line x1="{margin_left}" y1="{y:.1f}" x2="{width - 10}" y2="{y:.1f}" '
            f'stroke="#ddd"/>'
            f'<text x="{margin_left - 8}" y="{y + 4:.1f}" text-anchor="end">{tick:.2f}</text>'
        )
    for i, key in enumerate(keys):
        cell = report.cells[key]
        x0 = margin_left + 10 + i * group_w
        if "metrics" in cell:
            for j, (metric, color) in enumerate((("ap50", "#2b6cb0"), ("ap", "#90bde6"))):
                value = max(0.0, min(1.0, float(cell["metrics"][metric])))
                bar_h = plot_h * value
                x = x0 + j * 22
                y = margin_top + plot_h - bar_h
                parts.append(
                    f'<rect x="{x}" y="{y:.1f}" width="18" height="{bar_h:.1f}" '
                    f'fill="{color}"/>'
                )
        else:
            parts.append(
                f'<text x="{x0 + 22}" y="{margin_top + plot_h - 6}" fill="#c53030" '
                f'text-anchor="middle">failed</text>'
            )
        label = key if len(key) <= 14 else key[:13] + "…"
        parts.append(
            f'<text x="{x0 + 22}" y="{margin_top + plot_h + 14}" '
            f'transform="rotate(40 {x0 + 22} {margin_top + plot_h + 14})">{label}</text>'
        )
    legend_y = height - 16
    parts.append(
        f'<rect x="{margin_left}" y="{legend_y - 10}" width="12" height="12" fill="#2b6cb0"/>'
        f'<text x="{margin_left + 16}" y="{legend_y}">overlap 0.50</text>'
        f'<rect x="{margin_left + 110}" y="{legend_y - 10}" width="12" height="12" fill="#90bde6"/>'
        f'<text x="{margin_left + 126}" y="{legend_y}">averaged 0.50:0.95</text>'
    )
    parts.append(
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{margin_top + plot_h}" stroke="#444"/>'
    )
    parts.append("</svg>")
    return "".join(parts)

"""Semi-supervised corpus enrichment and its evaluation protocol.

The pipeline grows a small hand-labeled corpus with machine annotations:

1. train a labeler on a seeded 80/20 split of the labeled data;
2. run it over an unlabeled corpus and keep detections at or above a
   confidence threshold as "auto" annotations (auto_label);
3. train detectors on labeled + auto data under one of three strategies and
   score them with k-fold cross-validation on the labeled data only.

Strategies:

* baseline: labeled data only (lineage length 1);
* comprehensive: one training run on labeled + auto combined (length 1);
* progressive: labeled first, then continue on labeled + auto (length 2).

Integrity rules enforced here, not merely documented: validation folds are
computed from the labeled corpus before any training, reused across all
strategies via the seed, and may never contain an auto-labeled frame; fold
predictions may only cover that fold's frames. Violations raise
IntegrityError because results computed after such a leak are worthless.

Every artifact (fold plan, step manifests, auto corpus, reports) is
persisted under a run directory for audit.
"""
from __future__ import annotations

import json
import logging
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .backend import (
    BackendRef,
    Hyperparameters,
    INIT_PRETRAINED,
    ModelRef,
    TrainSummary,
    TrainingStep,
    run_predict,
    run_train,
)
from .data import SOURCE_AUTO, Dataset, FrameRecord, GroundTruthObject
from .dataset_ops import FoldPlan, SplitSpec, filter_no_object_frames, kfold, merge, split
from .errors import ConfigError, IntegrityError, ProtocolError
from .evaluation import MetricsReport, evaluate
from .formats import load_manifest, save_dataset
from .geometry import clamp_box
from .predictions import PredictionSet
from .rng import derive_seed, sample_prefix

logger = logging.getLogger(__name__)

STRATEGIES = ("baseline", "comprehensive", "progressive")

LABELER_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class EnrichmentConfig:
    """One enrichment run: data, strategy, and reproducibility knobs.

    include_empty_auto_frames controls whether auto-labeled frames in which
    the labeler found nothing still join the training pools (as pure
    negatives). They are always kept in the auto corpus itself, flagged by
    their zero object count.
    """

    labeled: Dataset
    strategy: str
    unlabeled_manifest: Optional[Path] = None
    confidence_threshold: float = 0.5
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    seed: int = 0
    folds: int = 5
    include_empty_auto_frames: bool = False
    operating_confidence: float = 0.5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not (0.0 < self.confidence_threshold < 1.0):
            raise ConfigError(
                f"confidence_threshold must be in (0, 1), got {self.confidence_threshold}"
            )
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if len(self.labeled) < self.folds:
            raise ConfigError(
                f"labeled dataset has {len(self.labeled)} frames, fewer than "
                f"{self.folds} folds"
            )


@dataclass(frozen=True)
class StrategyResult:
    """What one strategy run returns: the deployable model and its scores."""

    strategy: str
    model: ModelRef
    metrics: MetricsReport
    fold_plan: FoldPlan
    auto_dataset: Optional[Dataset]
    run_dir: Path
    report_path: Path


def auto_label(
    backend: BackendRef,
    model: ModelRef,
    unlabeled_manifest: Path,
    confidence_threshold: float = 0.5,
    *,
    work_dir: Optional[Path] = None,
) -> Dataset:
    """Annotate an unlabeled corpus with a trained model.

    Detections with confidence at or above the threshold (inclusive) become
    auto annotations; frames where nothing survives are retained with zero
    objects so downstream code can count and audit them. The manifest must
    not carry annotation paths: this operation defines them.
    """
    if not (0.0 < confidence_threshold < 1.0):
        raise ConfigError(
            f"confidence_threshold must be in (0, 1), got {confidence_threshold}"
        )
    manifest = load_manifest(unlabeled_manifest)
    for entry in manifest.entries:
        if entry.annotation_path is not None:
            raise ConfigError(
                f"frame {entry.frame_id!r} already has annotations; refusing to relabel"
            )
    if work_dir is None:
        work_dir = Path(tempfile.mkdtemp(prefix="autolabel-"))
    work_dir.mkdir(parents=True, exist_ok=True)
    sets = run_predict(
        backend, model.path, Path(unlabeled_manifest), work_dir / "predictions.jsonl"
    )
    known = {e.frame_id for e in manifest.entries}
    by_frame: Dict[str, PredictionSet] = {}
    for ps in sets:
        if ps.frame_id not in known:
            raise ProtocolError(
                f"backend predicted unknown frame {ps.frame_id!r} during auto-labeling"
            )
        by_frame[ps.frame_id] = ps

    frames: List[FrameRecord] = []
    n_empty = 0
    for entry in manifest.entries:
        objects: List[GroundTruthObject] = []
        ps = by_frame.get(entry.frame_id)
        for det in (ps.detections if ps else ()):
            if det.confidence < confidence_threshold:
                continue
            box = clamp_box(
                det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max,
                float(entry.width), float(entry.height),
            )
            if box is None:
                logger.warning(
                    "auto-label: dropping out-of-frame box on %s", entry.frame_id
                )
                continue
            objects.append(
                GroundTruthObject(box=box, source=SOURCE_AUTO, confidence=det.confidence)
            )
        if not objects:
            n_empty += 1
        origin = (
            entry.frame_id.split("/", 1)[0] if "/" in entry.frame_id else manifest.name
        )
        frames.append(
            FrameRecord(
                frame_id=entry.frame_id,
                image_path=str(entry.image_path),
                width=entry.width,
                height=entry.height,
                objects=tuple(objects),
                origin=origin,
                labeled=True,
            )
        )
    if n_empty:
        logger.info(
            "auto-label: %d/%d frames got no annotations at threshold %.2f",
            n_empty, len(frames), confidence_threshold,
        )
    return Dataset(manifest.name, tuple(frames))


def train_step(
    backend: BackendRef,
    init: Union[str, ModelRef],
    train: Dataset,
    val: Dataset,
    hyperparameters: Hyperparameters,
    seed: int,
    run_dir: Path,
    step_name: str,
) -> Tuple[ModelRef, TrainSummary]:
    """One training invocation: write manifests, run the backend, extend lineage."""
    overlap = set(train.frame_ids) & set(val.frame_ids)
    if overlap:
        raise ConfigError(
            f"step {step_name!r}: train and val share frames, e.g. {sorted(overlap)[:3]}"
        )
    if len(train) == 0 or len(val) == 0:
        raise ConfigError(f"step {step_name!r}: train and val must both be non-empty")
    step_dir = Path(run_dir) / step_name
    train_manifest = save_dataset(train, step_dir / "train")
    val_manifest = save_dataset(val, step_dir / "val")
    if isinstance(init, ModelRef):
        init_str = str(init.path)
        lineage = init.lineage
    else:
        init_str = init
        lineage = ()
    out_dir = step_dir / "model"
    summary = run_train(
        backend, train_manifest, val_manifest, init_str, out_dir, hyperparameters, seed
    )
    step = TrainingStep(
        dataset_name=train.name,
        n_frames=len(train),
        init=init_str,
        seed=seed,
        hyperparameters=hyperparameters,
    )
    model = ModelRef(path=out_dir, lineage=lineage + (step,))
    (step_dir / "lineage.json").write_text(
        json.dumps(model.lineage_as_dicts(), indent=2)
    )
    return model, summary


def _labeler_split(config: EnrichmentConfig) -> Tuple[Dataset, Dataset]:
    spec = SplitSpec(
        ratios=(LABELER_TRAIN_FRACTION, 1.0 - LABELER_TRAIN_FRACTION),
        names=("train", "val"),
        seed=derive_seed(config.seed, "labeler-split"),
    )
    part_train, part_val = split(config.labeled, spec)
    return part_train, part_val


def _training_pool(
    name: str, labeled_part: Dataset, auto: Optional[Dataset], config: EnrichmentConfig
) -> Dataset:
    if auto is None:
        return labeled_part.with_name(name)
    usable = auto if config.include_empty_auto_frames else filter_no_object_frames(auto)
    return merge([labeled_part, usable], name)


def run_strategy(
    config: EnrichmentConfig,
    backend: BackendRef,
    run_dir: Optional[Path] = None,
    auto_dataset: Optional[Dataset] = None,
) -> StrategyResult:
    """Execute one enrichment strategy end to end.

    Returns the final deployable model (trained on everything the strategy
    allows) and cross-validation metrics pooled over all folds. Pass
    auto_dataset to reuse an existing auto-labeled pool instead of labeling
    again; baseline ignores auto data entirely.
    """
    if run_dir is None:
        run_dir = Path(tempfile.mkdtemp(prefix="enrichment-"))
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    labeled = config.labeled
    uses_auto = config.strategy != "baseline"
    if uses_auto and auto_dataset is None and config.unlabeled_manifest is None:
        raise ConfigError(
            f"strategy {config.strategy!r} needs an unlabeled manifest or an auto pool"
        )

    plan = kfold(labeled, config.folds, config.seed)
    plan.save(run_dir / "fold_plan.json")

    # Labeler, also the baseline's final model: seeded 80/20 of the labeled data.
    base_train, base_val = _labeler_split(config)
    base_model, _ = train_step(
        backend, INIT_PRETRAINED, base_train, base_val,
        config.hyperparameters, config.seed, run_dir, "base",
    )

    auto = None
    if uses_auto:
        if auto_dataset is not None:
            auto = auto_dataset
        else:
            auto = auto_label(
                backend, base_model, config.unlabeled_manifest,
                config.confidence_threshold, work_dir=run_dir / "autolabel",
            )
        save_dataset(auto, run_dir / "auto", fmt="coco_document")
        shared = set(auto.frame_ids) & set(labeled.frame_ids)
        if shared:
            raise IntegrityError(
                f"auto pool and labeled corpus share frame ids, e.g. {sorted(shared)[:3]}"
            )

    auto_ids = set(auto.frame_ids) if auto is not None else set()
    pooled_sets: List[PredictionSet] = []
    for fold in range(config.folds):
        fold_train, fold_val = plan.fold_split(labeled, fold)
        val_ids = set(fold_val.frame_ids)
        leaked = val_ids & auto_ids
        if leaked:
            raise IntegrityError(
                f"fold {fold}: auto-labeled frames inside the validation fold: "
                f"{sorted(leaked)[:3]}"
            )
        fold_dir = run_dir / f"fold{fold}"
        if config.strategy == "baseline":
            model, _ = train_step(
                backend, INIT_PRETRAINED, fold_train, fold_val,
                config.hyperparameters, config.seed, fold_dir, "train",
            )
        elif config.strategy == "comprehensive":
            pool = _training_pool(f"{labeled.name}/fold{fold}-extended", fold_train, auto, config)
            model, _ = train_step(
                backend, INIT_PRETRAINED, pool, fold_val,
                config.hyperparameters, config.seed, fold_dir, "train",
            )
        else:  # progressive
            first, _ = train_step(
                backend, INIT_PRETRAINED, fold_train, fold_val,
                config.hyperparameters, config.seed, fold_dir, "stage1",
            )
            pool = _training_pool(f"{labeled.name}/fold{fold}-extended", fold_train, auto, config)
            model, _ = train_step(
                backend, first, pool, fold_val,
                config.hyperparameters, config.seed, fold_dir, "stage2",
            )
        val_manifest = save_dataset(fold_val, fold_dir / "val-eval")
        sets = run_predict(
            backend, model.path, val_manifest, fold_dir / "predictions.jsonl"
        )
        for ps in sets:
            if ps.frame_id not in val_ids:
                raise IntegrityError(
                    f"fold {fold}: prediction for frame {ps.frame_id!r} outside "
                    f"the validation fold"
                )
        pooled_sets.extend(sets)

    metrics = evaluate(labeled, pooled_sets, config.operating_confidence)

    # Final deployable model; expected lineage lengths 1/1/2.
    if config.strategy == "baseline":
        final = base_model
    elif config.strategy == "comprehensive":
        pool = _training_pool(f"{labeled.name}/extended", base_train, auto, config)
        final, _ = train_step(
            backend, INIT_PRETRAINED, pool, base_val,
            config.hyperparameters, config.seed, run_dir, "final",
        )
    else:
        pool = _training_pool(f"{labeled.name}/extended", base_train, auto, config)
        final, _ = train_step(
            backend, base_model, pool, base_val,
            config.hyperparameters, config.seed, run_dir, "final",
        )

    report_path = run_dir / "strategy_report.json"
    report_path.write_text(
        json.dumps(
            {
                "strategy": config.strategy,
                "seed": config.seed,
                "folds": config.folds,
                "confidence_threshold": config.confidence_threshold,
                "labeled_dataset": labeled.name,
                "n_labeled": len(labeled),
                "n_auto": len(auto) if auto is not None else 0,
                "metrics": metrics.as_dict(),
                "lineage": final.lineage_as_dicts(),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return StrategyResult(
        strategy=config.strategy,
        model=final,
        metrics=metrics,
        fold_plan=plan,
        auto_dataset=auto,
        run_dir=run_dir,
        report_path=report_path,
    )


def build_auto_pool(
    config: EnrichmentConfig,
    backend: BackendRef,
    run_dir: Path,
) -> Dataset:
    """Train the labeler and auto-label the whole unlabeled corpus once."""
    if config.unlabeled_manifest is None:
        raise ConfigError("an unlabeled manifest is required to build an auto pool")
    run_dir = Path(run_dir)
    base_train, base_val = _labeler_split(config)
    base_model, _ = train_step(
        backend, INIT_PRETRAINED, base_train, base_val,
        config.hyperparameters, config.seed, run_dir, "pool-labeler",
    )
    return auto_label(
        backend, base_model, config.unlabeled_manifest,
        config.confidence_threshold, work_dir=run_dir / "pool-autolabel",
    )


def incremental_enrichment(
    config: EnrichmentConfig,
    backend: BackendRef,
    increments: Sequence[int],
    run_dir: Optional[Path] = None,
) -> List[Tuple[int, StrategyResult]]:
    """Run the configured strategy at growing auto-pool sizes.

    The auto pool is labeled once; each increment takes a seeded prefix of
    it, so smaller subsets nest inside larger ones and every run shares the
    fold plan (same labeled data, same seed). increments must be
    non-negative, strictly increasing, and within the pool size.
    """
    if not increments:
        raise ConfigError("increments must be non-empty")
    counts = list(increments)
    if any(c < 0 for c in counts) or counts != sorted(set(counts)):
        raise ConfigError(f"increments must be strictly increasing and >= 0: {counts}")
    if run_dir is None:
        run_dir = Path(tempfile.mkdtemp(prefix="incremental-"))
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    pool = build_auto_pool(config, backend, run_dir)
    if counts[-1] > len(pool):
        raise ConfigError(
            f"largest increment {counts[-1]} exceeds auto pool size {len(pool)}"
        )
    order_seed = derive_seed(config.seed, "incremental-selection")

    results: List[Tuple[int, StrategyResult]] = []
    for count in counts:
        subset_frames = sample_prefix(pool.frames, count, order_seed)
        subset = Dataset(pool.name, tuple(subset_frames))
        result = run_strategy(
            config, backend, run_dir / f"auto{count}", auto_dataset=subset
        )
        results.append((count, result))
    (run_dir / "incremental_report.json").write_text(
        json.dumps(
            {
                "strategy": config.strategy,
                "seed": config.seed,
                "increments": counts,
                "pool_size": len(pool),
                "metrics": {str(c): r.metrics.as_dict() for c, r in results},
            },
            indent=2,
            sort_keys=True,
        )
    )
    return results

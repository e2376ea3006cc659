"""Detection metrics: interpolated average precision and operating-point scores.

Scoring protocol, in full, because every downstream number depends on it:

* Detections are matched per frame with the greedy confidence-ordered rule
  (see matching module) at a given overlap threshold.
* Each frame keeps at most MAX_DETECTIONS_PER_IMAGE detections (highest
  confidence first, ties by input order) before anything else is computed.
* The precision-recall curve pools all frames' detections, sorted by
  descending confidence (ties: frame order, then input order within the
  frame), and accumulates true/false positives; recall uses the total
  ground-truth count as denominator.
* Average precision interpolates the curve at the 101 recall levels
  0.00, 0.01, ..., 1.00: at each level take the maximum precision at any
  recall at or beyond it (0 when unreachable), then average.
* The headline AP averages the AP at the ten thresholds 0.50:0.05:0.95.
  AP50 and AP75 are the 0.50 and 0.75 entries.
* Precision/recall/F1 are computed at overlap 0.50 counting only detections
  with confidence at or above the operating confidence (default 0.5).

Degenerate inputs: a dataset with zero ground-truth objects scored against
zero detections is vacuously perfect (all metrics 1.0); zero detections
against nonzero ground truth scores 0 everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .data import Dataset
from .errors import ConfigError, EvaluationError
from .matching import match_detections
from .predictions import Detection, PredictionSet

MAX_DETECTIONS_PER_IMAGE = 100

# Overlap thresholds for the averaged AP, exact hundredths.
AP_THRESHOLDS = tuple((50 + 5 * j) / 100.0 for j in range(10))

# Recall levels for interpolated AP, exact hundredths.
RECALL_LEVELS = tuple(i / 100.0 for i in range(101))

OPERATING_CONFIDENCE = 0.5


@dataclass(frozen=True)
class PRCurve:
    """Precision-recall pairs in pooled confidence order at one threshold."""

    iou_threshold: float
    points: Tuple[Tuple[float, float], ...]  # (recall, precision)

    @property
    def recalls(self) -> Tuple[float, ...]:
        return tuple(p[0] for p in self.points)

    @property
    def precisions(self) -> Tuple[float, ...]:
        return tuple(p[1] for p in self.points)


@dataclass(frozen=True)
class MetricsReport:
    """Everything one evaluation run produces."""

    ap50: float
    ap75: float
    ap: float
    precision: float
    recall: float
    f1: float
    n_images: int
    n_ground_truth: int
    n_detections: int
    operating_confidence: float
    curves: Tuple[PRCurve, ...]

    def as_dict(self) -> dict:
        return {
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap": self.ap,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_images": self.n_images,
            "n_ground_truth": self.n_ground_truth,
            "n_detections": self.n_detections,
            "operating_confidence": self.operating_confidence,
        }


def _validated_frame_sets(
    dataset: Dataset, predictions: Sequence[PredictionSet]
) -> Dict[str, PredictionSet]:
    known = set(dataset.frame_ids)
    by_frame: Dict[str, PredictionSet] = {}
    for ps in predictions:
        if ps.frame_id not in known:
            raise EvaluationError(f"predictions reference unknown frame {ps.frame_id!r}")
        if ps.frame_id in by_frame:
            raise EvaluationError(f"duplicate prediction set for frame {ps.frame_id!r}")
        by_frame[ps.frame_id] = ps
    return by_frame


def _cap_detections(detections: Sequence[Detection]) -> Tuple[Detection, ...]:
    if len(detections) <= MAX_DETECTIONS_PER_IMAGE:
        return tuple(detections)
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    keep = sorted(order[:MAX_DETECTIONS_PER_IMAGE])
    return tuple(detections[i] for i in keep)


def pr_curve(
    dataset: Dataset,
    predictions: Sequence[PredictionSet],
    iou_threshold: float,
) -> PRCurve:
    """Pooled precision-recall curve at one overlap threshold.

    One point per detection, in the pooled confidence order described in the
    module docstring. Frames without a prediction set count as zero
    detections. No per-image cap is applied here; evaluate() caps before
    calling.
    """
    by_frame = _validated_frame_sets(dataset, predictions)
    n_gt = dataset.stats.n_objects

    # (confidence, frame_order, det_index, is_tp) for the pooled sort
    pooled: List[Tuple[float, int, int, bool]] = []
    for frame_order, frame in enumerate(dataset.frames):
        ps = by_frame.get(frame.frame_id)
        if ps is None or not ps.detections:
            continue
        gt_boxes = [obj.box for obj in frame.objects]
        result = match_detections(gt_boxes, ps.detections, iou_threshold, frame.frame_id)
        tp_indices = {di for di, _, _ in result.pairs}
        for di in range(len(ps.detections)):
            pooled.append(
                (ps.detections[di].confidence, frame_order, di, di in tp_indices)
            )

    pooled.sort(key=lambda rec: (-rec[0], rec[1], rec[2]))
    if not pooled:
        return PRCurve(iou_threshold=iou_threshold, points=())

    tp_flags = np.array([rec[3] for rec in pooled], dtype=np.float64)
    tp_cum = np.cumsum(tp_flags)
    ranks = np.arange(1, len(pooled) + 1, dtype=np.float64)
    precisions = tp_cum / ranks
    recalls = tp_cum / n_gt if n_gt > 0 else np.zeros_like(tp_cum)
    points = tuple((float(r), float(p)) for r, p in zip(recalls, precisions))
    return PRCurve(iou_threshold=iou_threshold, points=points)


def average_precision(curve: PRCurve) -> float:
    """Interpolated average precision of one curve over RECALL_LEVELS."""
    if not curve.points:
        return 0.0
    recalls = np.array(curve.recalls, dtype=np.float64)
    precisions = np.array(curve.precisions, dtype=np.float64)
    # Monotone envelope from the right: best precision at recall >= r is a
    # suffix maximum once points are in recall (i.e. pooled) order.
    suffix_max = np.maximum.accumulate(precisions[::-1])[::-1]
    total = 0.0
    for level in RECALL_LEVELS:
        idx = np.searchsorted(recalls, level, side="left")
        if idx < len(recalls):
            total += float(suffix_max[idx])
    return total / len(RECALL_LEVELS)


def evaluate(
    dataset: Dataset,
    predictions: Sequence[PredictionSet],
    operating_confidence: float = OPERATING_CONFIDENCE,
) -> MetricsReport:
    """Score predictions against a dataset. See module docstring for the rules."""
    if not (0.0 <= operating_confidence <= 1.0):
        raise ConfigError(
            f"operating_confidence must be in [0, 1], got {operating_confidence}"
        )
    by_frame = _validated_frame_sets(dataset, predictions)

    capped = [
        PredictionSet(frame_id=fid, detections=_cap_detections(ps.detections))
        for fid, ps in by_frame.items()
    ]
    n_gt = dataset.stats.n_objects
    n_det = sum(len(ps.detections) for ps in capped)

    if n_gt == 0 and n_det == 0:
        # Nothing to find and nothing claimed: vacuously perfect.
        return MetricsReport(
            ap50=1.0, ap75=1.0, ap=1.0,
            precision=1.0, recall=1.0, f1=1.0,
            n_images=dataset.stats.n_images,
            n_ground_truth=0, n_detections=0,
            operating_confidence=operating_confidence,
            curves=(),
        )

    curves = tuple(pr_curve(dataset, capped, thr) for thr in AP_THRESHOLDS)
    aps = [average_precision(c) for c in curves]
    ap50 = aps[AP_THRESHOLDS.index(0.5)]
    ap75 = aps[AP_THRESHOLDS.index(0.75)]
    ap = float(np.mean(aps))

    # Operating point: overlap 0.50, confidence filter inclusive.
    capped_by_frame = {ps.frame_id: ps for ps in capped}
    tp = 0
    kept = 0
    for frame in dataset.frames:
        ps = capped_by_frame.get(frame.frame_id)
        if ps is None:
            continue
        dets = [d for d in ps.detections if d.confidence >= operating_confidence]
        kept += len(dets)
        if not dets:
            continue
        result = match_detections([o.box for o in frame.objects], dets, 0.5, frame.frame_id)
        tp += result.n_true_positives
    fp = kept - tp
    fn = n_gt - tp
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) > 0 else 0.0

    return MetricsReport(
        ap50=ap50,
        ap75=ap75,
        ap=ap,
        precision=precision,
        recall=recall,
        f1=f1,
        n_images=dataset.stats.n_images,
        n_ground_truth=n_gt,
        n_detections=n_det,
        operating_confidence=operating_confidence,
        curves=curves,
    )

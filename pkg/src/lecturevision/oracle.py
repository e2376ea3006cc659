"""Reference evaluator for cross-checking the production metrics.

Same scoring contract as evaluation.evaluate, written as a deliberately
separate implementation: pure Python, no numpy, no imports from the matching
or evaluation modules, its own overlap arithmetic, its own ordering loop
(selection scan instead of sort), its own interpolation scan. If the two
implementations agree on a few hundred random scenes, a bug would have to be
present in both independently to go unseen.

To stay obviously correct it refuses large frames: at most MAX_GROUND_TRUTH
ground-truth boxes and MAX_DETECTIONS detections per frame. Within those
bounds the per-image detection cap of the production path can never trigger,
so it is not reimplemented here.
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

from .data import Dataset
from .errors import EvaluationError, OracleRefusal
from .evaluation import MetricsReport
from .predictions import PredictionSet

MAX_GROUND_TRUTH = 5
MAX_DETECTIONS = 8


def _overlap(a: Tuple[float, float, float, float],
             b: Tuple[float, float, float, float]) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = (ax1 if ax1 < bx1 else bx1) - (ax0 if ax0 > bx0 else bx0)
    ih = (ay1 if ay1 < by1 else by1) - (ay0 if ay0 > by0 else by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    return inter / (area_a + area_b - inter)


def _greedy_tp_flags(
    gt: List[Tuple[float, float, float, float]],
    dets: List[Tuple[Tuple[float, float, float, float], float]],
    threshold: float,
) -> List[bool]:
    """True-positive flag per detection (input order), greedy rule."""
    n = len(dets)
    processed = [False] * n
    gt_used = [False] * len(gt)
    flags = [False] * n
    for _ in range(n):
        # Highest confidence among unprocessed; earliest on ties.
        pick = -1
        for i in range(n):
            if processed[i]:
                continue
            if pick < 0 or dets[i][1] > dets[pick][1]:
                pick = i
        processed[pick] = True
        best_g = -1
        best_ov = 0.0
        for g in range(len(gt)):
            if gt_used[g]:
                continue
            ov = _overlap(dets[pick][0], gt[g])
            if ov > best_ov:
                best_ov = ov
                best_g = g
        if best_g >= 0 and best_ov >= threshold:
            gt_used[best_g] = True
            flags[pick] = True
    return flags


def _interpolated_ap(points: List[Tuple[float, float]]) -> float:
    if not points:
        return 0.0
    total = 0.0
    for i in range(101):
        level = i / 100.0
        best = 0.0
        for recall, precision in points:
            if recall >= level and precision > best:
                best = precision
        total += best
    return total / 101.0


def oracle_evaluate(
    dataset: Dataset,
    predictions: Sequence[PredictionSet],
    operating_confidence: float = 0.5,
) -> MetricsReport:
    """Score predictions with the reference implementation.

    Raises OracleRefusal when any frame exceeds the documented size bounds.
    """
    known = {f.frame_id for f in dataset.frames}
    by_frame: Dict[str, PredictionSet] = {}
    for ps in predictions:
        if ps.frame_id not in known:
            raise EvaluationError(f"predictions reference unknown frame {ps.frame_id!r}")
        if ps.frame_id in by_frame:
            raise EvaluationError(f"duplicate prediction set for frame {ps.frame_id!r}")
        by_frame[ps.frame_id] = ps

    frames = []
    n_gt = 0
    n_det = 0
    for frame in dataset.frames:
        gt = [o.box.as_tuple() for o in frame.objects]
        ps = by_frame.get(frame.frame_id)
        dets = (
            [(d.box.as_tuple(), d.confidence) for d in ps.detections] if ps else []
        )
        if len(gt) > MAX_GROUND_TRUTH:
            raise OracleRefusal(
                f"frame {frame.frame_id!r} has {len(gt)} ground-truth boxes, "
                f"reference evaluator handles at most {MAX_GROUND_TRUTH}"
            )
        if len(dets) > MAX_DETECTIONS:
            raise OracleRefusal(
                f"frame {frame.frame_id!r} has {len(dets)} detections, "
                f"reference evaluator handles at most {MAX_DETECTIONS}"
            )
        n_gt += len(gt)
        n_det += len(dets)
        frames.append((gt, dets))

    if n_gt == 0 and n_det == 0:
        return MetricsReport(
            ap50=1.0, ap75=1.0, ap=1.0, precision=1.0, recall=1.0, f1=1.0,
            n_images=len(dataset.frames), n_ground_truth=0, n_detections=0,
            operating_confidence=operating_confidence, curves=(),
        )

    aps = []
    ap50 = 0.0
    ap75 = 0.0
    for j in range(10):
        threshold = (50 + 5 * j) / 100.0
        # Pool (confidence, frame_index, det_index, is_tp) and order by
        # descending confidence with ties on (frame, det) order, using a
        # repeated-minimum scan rather than a sort.
        records = []
        for fi, (gt, dets) in enumerate(frames):
            if not dets:
                continue
            flags = _greedy_tp_flags(gt, dets, threshold)
            for di, (box, conf) in enumerate(dets):
                records.append((conf, fi, di, flags[di]))
        remaining = list(range(len(records)))
        points: List[Tuple[float, float]] = []
        tp = 0
        seen = 0
        while remaining:
            pick_pos = 0
            for pos in range(1, len(remaining)):
                a = records[remaining[pos]]
                b = records[remaining[pick_pos]]
                if a[0] > b[0] or (a[0] == b[0] and (a[1], a[2]) < (b[1], b[2])):
                    pick_pos = pos
            rec = records[remaining.pop(pick_pos)]
            seen += 1
            if rec[3]:
                tp += 1
            recall = tp / n_gt if n_gt > 0 else 0.0
            points.append((recall, tp / seen))
        ap_j = _interpolated_ap(points)
        aps.append(ap_j)
        if threshold == 0.5:
            ap50 = ap_j
        if threshold == 0.75:
            ap75 = ap_j

    ap = sum(aps) / len(aps)

    tp = 0
    kept = 0
    for gt, dets in frames:
        strong = [(box, conf) for box, conf in dets if conf >= operating_confidence]
        kept += len(strong)
        if strong:
            flags = _greedy_tp_flags(gt, strong, 0.5)
            tp += sum(1 for f in flags if f)
    precision = tp / kept if kept > 0 else 0.0
    recall = tp / n_gt if n_gt > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0

    return MetricsReport(
        ap50=ap50, ap75=ap75, ap=ap,
        precision=precision, recall=recall, f1=f1,
        n_images=len(dataset.frames), n_ground_truth=n_gt, n_detections=n_det,
        operating_confidence=operating_confidence, curves=(),
    )

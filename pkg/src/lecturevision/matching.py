"""Greedy confidence-ordered matching of detections to ground truth.

The matching rule, fixed so every consumer (metrics, error analysis, tests)
agrees on what a true positive is:

1. Consider detections in order of descending confidence; equal confidences
   keep their input order.
2. Each detection takes the still-unmatched ground-truth box with the
   highest overlap, provided that overlap reaches the threshold. Equal
   overlaps go to the lowest ground-truth index.
3. Each ground-truth box is consumed by at most one detection.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

from .errors import ConfigError
from .geometry import Box, iou
from .predictions import Detection


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one frame at one overlap threshold.

    pairs holds (detection_index, ground_truth_index, overlap) in the order
    the detections were considered; indices refer to the input sequences.
    """

    frame_id: str
    iou_threshold: float
    pairs: Tuple[Tuple[int, int, float], ...]
    unmatched_detections: Tuple[int, ...]
    unmatched_ground_truth: Tuple[int, ...]

    @property
    def n_true_positives(self) -> int:
        return len(self.pairs)


def match_detections(
    ground_truth: Sequence[Box],
    detections: Sequence[Detection],
    iou_threshold: float,
    frame_id: str = "",
) -> MatchResult:
    """Match one frame's detections against its ground truth.

    Pure function of its inputs; no randomness, no dependence on dict order.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ConfigError(f"iou_threshold must be in (0, 1], got {iou_threshold}")

    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    taken = [False] * len(ground_truth)
    pairs: list[Tuple[int, int, float]] = []
    unmatched_det: list[int] = []
    for di in order:
        best_gi = -1
        best_overlap = 0.0
        for gi, gt_box in enumerate(ground_truth):
            if taken[gi]:
                continue
            overlap = iou(detections[di].box, gt_box)
            if overlap > best_overlap:
                best_overlap = overlap
                best_gi = gi
        if best_gi >= 0 and best_overlap >= iou_threshold:
            taken[best_gi] = True
            pairs.append((di, best_gi, best_overlap))
        else:
            unmatched_det.append(di)
    unmatched_gt = tuple(gi for gi, used in enumerate(taken) if not used)
    return MatchResult(
        frame_id=frame_id,
        iou_threshold=iou_threshold,
        pairs=tuple(pairs),
        unmatched_detections=tuple(sorted(unmatched_det)),
        unmatched_ground_truth=unmatched_gt,
    )

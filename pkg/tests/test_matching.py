"""Greedy matcher against an independent, brute-force reimplementation."""
from __future__ import annotations

import pytest

from lecturevision.errors import ConfigError
from lecturevision.geometry import Box, iou
from lecturevision.matching import match_detections
from lecturevision.predictions import Detection

from conftest import random_scene


def brute_force_pairs(ground_truth, detections, threshold):
    """Reference matcher: explicit decorate-sort then exhaustive argmax scan."""
    order = sorted(
        range(len(detections)),
        key=lambda i: (-detections[i].confidence, i),
    )
    used = set()
    pairs = []
    for di in order:
        candidates = []
        for gi in range(len(ground_truth)):
            if gi in used:
                continue
            ov = iou(detections[di].box, ground_truth[gi])
            candidates.append((ov, gi))
        if not candidates:
            continue
        best_ov = max(ov for ov, _ in candidates)
        if best_ov >= threshold:
            best_gi = min(gi for ov, gi in candidates if ov == best_ov)
            used.add(best_gi)
            pairs.append((di, best_gi))
    return pairs


def det(x0, y0, x1, y1, conf) -> Detection:
    return Detection(box=Box(x0, y0, x1, y1), confidence=conf)


def test_higher_confidence_takes_the_ground_truth():
    gt = [Box(0, 0, 10, 10)]
    detections = [det(0, 0, 10, 10, 0.5), det(0, 0, 10, 10, 0.9)]
    result = match_detections(gt, detections, 0.5)
    assert result.pairs == ((1, 0, 1.0),)
    assert result.unmatched_detections == (0,)
    assert result.unmatched_ground_truth == ()


def test_confidence_tie_keeps_input_order():
    gt = [Box(0, 0, 10, 10)]
    detections = [det(0, 0, 10, 10, 0.7), det(0, 0, 10, 10, 0.7)]
    result = match_detections(gt, detections, 0.5)
    assert result.pairs[0][0] == 0


def test_equal_overlap_goes_to_lowest_ground_truth_index():
    # detection overlaps both ground-truth boxes identically
    gt = [Box(0, 0, 10, 10), Box(20, 0, 30, 10)]
    d = det(5, 0, 25, 10, 0.9)  # covers right half of gt0, left half of gt1
    assert iou(d.box, gt[0]) == iou(d.box, gt[1])
    result = match_detections(gt, [d], 0.2)
    assert result.pairs == ((0, 0, iou(d.box, gt[0])),)


def test_threshold_boundary_is_inclusive():
    gt = [Box(0, 0, 10, 10)]
    half = det(0, 0, 10, 5, 0.9)  # inter 50, union 100 -> exactly 0.5
    assert iou(half.box, gt[0]) == 0.5
    assert match_detections(gt, [half], 0.5).n_true_positives == 1
    assert match_detections(gt, [half], 0.5000001).n_true_positives == 0


def test_each_ground_truth_matched_once():
    gt = [Box(0, 0, 10, 10)]
    detections = [det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8)]
    result = match_detections(gt, detections, 0.5)
    assert result.n_true_positives == 1
    assert result.unmatched_detections == (1,)


def test_empty_inputs():
    result = match_detections([], [], 0.5)
    assert result.pairs == ()
    result = match_detections([Box(0, 0, 5, 5)], [], 0.5)
    assert result.unmatched_ground_truth == (0,)
    result = match_detections([], [det(0, 0, 5, 5, 0.9)], 0.5)
    assert result.unmatched_detections == (0,)


def test_threshold_validation():
    gt = [Box(0, 0, 10, 10)]
    with pytest.raises(ConfigError):
        match_detections(gt, [], 0.0)
    with pytest.raises(ConfigError):
        match_detections(gt, [], 1.5)
    match_detections(gt, [], 1.0)  # upper bound allowed


def test_matches_brute_force_on_random_frames():
    checked = 0
    for seed in range(120):
        dataset, sets = random_scene(seed, max_frames=4)
        by_id = {ps.frame_id: ps for ps in sets}
        for frame in dataset.frames:
            detections = list(by_id[frame.frame_id].detections)
            gt = [o.box for o in frame.objects]
            for threshold in (0.3, 0.5, 0.75):
                result = match_detections(gt, detections, threshold)
                expected = brute_force_pairs(gt, detections, threshold)
                assert [(d, g) for d, g, _ in result.pairs] == expected
                checked += 1
    assert checked > 500


def test_result_bookkeeping_consistency():
    for seed in range(40):
        dataset, sets = random_scene(seed, max_frames=3)
        by_id = {ps.frame_id: ps for ps in sets}
        for frame in dataset.frames:
            detections = list(by_id[frame.frame_id].detections)
            gt = [o.box for o in frame.objects]
            result = match_detections(gt, detections, 0.5)
            matched_d = {d for d, _, _ in result.pairs}
            matched_g = {g for _, g, _ in result.pairs}
            assert matched_d | set(result.unmatched_detections) == set(range(len(detections)))
            assert matched_g | set(result.unmatched_ground_truth) == set(range(len(gt)))
            assert len(matched_g) == len(result.pairs)
            for _, _, ov in result.pairs:
                assert ov >= 0.5

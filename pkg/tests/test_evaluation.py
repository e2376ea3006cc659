"""Metric engine tests: frozen curves, frozen AP values, scoring laws."""
from __future__ import annotations

import pytest

from lecturevision.data import Dataset, FrameRecord, GroundTruthObject
from lecturevision.errors import ConfigError, EvaluationError
from lecturevision.evaluation import (
    AP_THRESHOLDS,
    MAX_DETECTIONS_PER_IMAGE,
    RECALL_LEVELS,
    average_precision,
    evaluate,
    pr_curve,
)
from lecturevision.geometry import Box
from lecturevision.matching import match_detections
from lecturevision.predictions import Detection, PredictionSet
from lecturevision.rng import SplitMix64, shuffled

from conftest import FRAME_H, FRAME_W, make_dataset, random_scene


def one_frame_dataset(gt_boxes, frame_id="solo-f0"):
    frame = FrameRecord(
        frame_id=frame_id,
        image_path="unused.png",
        width=FRAME_W,
        height=FRAME_H,
        objects=tuple(GroundTruthObject(box=b) for b in gt_boxes),
    )
    return Dataset("solo", (frame,))


def echo_predictions(dataset: Dataset, confidence: float = 1.0):
    return [
        PredictionSet(
            frame_id=f.frame_id,
            detections=tuple(
                Detection(box=o.box, confidence=confidence) for o in f.objects
            ),
        )
        for f in dataset.frames
    ]


def test_constants():
    assert AP_THRESHOLDS == (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
    assert len(RECALL_LEVELS) == 101
    assert RECALL_LEVELS[0] == 0.0
    assert RECALL_LEVELS[-1] == 1.0
    assert MAX_DETECTIONS_PER_IMAGE == 100


def test_perfect_predictions_all_ones():
    ds = make_dataset("perf", [2, 0, 3, 1])
    report = evaluate(ds, echo_predictions(ds))
    assert report.ap50 == 1.0
    assert report.ap75 == 1.0
    assert report.ap == 1.0
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.f1 == 1.0
    assert report.n_images == 4
    assert report.n_ground_truth == 6
    assert report.n_detections == 6


def test_perfect_curve_reaches_one_one():
    ds = make_dataset("perf", [2, 1])
    curve = pr_curve(ds, echo_predictions(ds), 0.5)
    assert curve.points[-1] == (1.0, 1.0)


def test_zero_predictions_nonzero_gt_all_zero():
    ds = make_dataset("empty-preds", [1, 2])
    report = evaluate(ds, [])
    assert report.ap50 == 0.0
    assert report.ap75 == 0.0
    assert report.ap == 0.0
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.f1 == 0.0
    assert report.n_detections == 0


def test_no_detections_curve_degenerate():
    ds = make_dataset("empty-preds", [1])
    curve = pr_curve(ds, [], 0.5)
    assert curve.points == ()
    assert average_precision(curve) == 0.0


def test_vacuous_no_gt_no_detections_perfect():
    # Nothing to find, nothing claimed: scored as a solved instance.
    ds = make_dataset("blank", [0, 0])
    report = evaluate(ds, [])
    assert report.ap50 == report.ap75 == report.ap == 1.0
    assert report.precision == report.recall == report.f1 == 1.0
    assert report.n_ground_truth == 0
    assert report.n_detections == 0


def test_pr_curve_fp_then_tp_frozen():
    """1 GT, an FP at conf 0.9 then a TP at 0.8: points (0,0),(1,0.5); AP 0.5.

    Cumulative counts by hand: after the FP tp=0/rank=1, after the TP
    tp=1/rank=2. Interpolated precision is 0.5 at every recall level, so the
    average over the 101 levels is exactly 0.5.
    """
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    sets = [
        PredictionSet(
            frame_id="solo-f0",
            detections=(
                Detection(box=Box(100, 100, 120, 120), confidence=0.9),
                Detection(box=gt, confidence=0.8),
            ),
        )
    ]
    curve = pr_curve(ds, sets, 0.5)
    assert curve.points == ((0.0, 0.0), (1.0, 0.5))
    assert average_precision(curve) == pytest.approx(0.5, abs=1e-15)


def test_frozen_mixed_scene():
    """Two exact TPs bracketing an FP: AP50 = (51*1 + 50*(2/3))/101 = 253/303.

    Pooled order D1(TP) D2(FP) D3(TP) gives precisions 1, 1/2, 2/3 at recalls
    0.5, 0.5, 1.0. Levels 0.00..0.50 interpolate to 1.0 (51 of them), levels
    0.51..1.00 to 2/3 (50 of them). Both TPs are exact copies of their ground
    truth, so every threshold sees the same flags and ap == ap75 == ap50.
    """
    g1 = Box(0, 0, 10, 10)
    g2 = Box(20, 0, 30, 10)
    ds = one_frame_dataset([g1, g2])
    sets = [
        PredictionSet(
            frame_id="solo-f0",
            detections=(
                Detection(box=g1, confidence=0.9),
                Detection(box=Box(40, 0, 50, 10), confidence=0.8),
                Detection(box=g2, confidence=0.7),
            ),
        )
    ]
    report = evaluate(ds, sets)
    expected_ap = 253.0 / 303.0
    assert report.ap50 == pytest.approx(expected_ap, abs=1e-12)
    assert report.ap75 == pytest.approx(expected_ap, abs=1e-12)
    assert report.ap == pytest.approx(expected_ap, abs=1e-12)
    assert report.precision == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert report.recall == 1.0
    assert report.f1 == pytest.approx(0.8, abs=1e-12)


def test_threshold_sweep_partial_overlap():
    """A single detection at IoU 0.6 passes thresholds 0.50/0.55/0.60 only.

    Det (0,0,10,6) against GT (0,0,10,10): intersection 60, union 100. Three
    of the ten thresholds accept it (0.60 inclusively), each contributing an
    AP of 1.0, the other seven contribute 0: ap = 3/10.
    """
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    sets = [
        PredictionSet(
            frame_id="solo-f0",
            detections=(Detection(box=Box(0, 0, 10, 6), confidence=1.0),),
        )
    ]
    report = evaluate(ds, sets)
    assert report.ap50 == 1.0
    assert report.ap75 == 0.0
    assert report.ap == pytest.approx(0.3, abs=1e-12)
    # Operating point sits at IoU 0.50, where the detection is a hit.
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.f1 == 1.0


def test_per_image_detection_cap():
    """The 101st detection is dropped even when it is the only true positive.

    100 disjoint boxes at conf 0.9 outrank the exact-copy detection at 0.1,
    so the cap removes the TP before any scoring happens.
    """
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    clutter = [
        Detection(box=Box(20.0 + 6 * i, 20.0, 25.0 + 6 * i, 25.0), confidence=0.9)
        for i in range(100)
    ]
    dets = tuple(clutter + [Detection(box=gt, confidence=0.1)])
    report = evaluate(ds, [PredictionSet(frame_id="solo-f0", detections=dets)])
    assert report.n_detections == 100
    assert report.recall == 0.0
    assert report.ap50 == 0.0


def test_cap_keeps_high_confidence():
    # Same scene with the TP at conf 0.95: it survives the cap.
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    clutter = [
        Detection(box=Box(20.0 + 6 * i, 20.0, 25.0 + 6 * i, 25.0), confidence=0.9)
        for i in range(100)
    ]
    dets = tuple(clutter + [Detection(box=gt, confidence=0.95)])
    report = evaluate(ds, [PredictionSet(frame_id="solo-f0", detections=dets)])
    assert report.n_detections == 100
    assert report.recall == 1.0


def test_operating_confidence_inclusive():
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    sets = [
        PredictionSet(
            frame_id="solo-f0",
            detections=(Detection(box=gt, confidence=0.5),),
        )
    ]
    at_half = evaluate(ds, sets, operating_confidence=0.5)
    assert at_half.recall == 1.0
    above = evaluate(ds, sets, operating_confidence=0.6)
    assert above.recall == 0.0
    # AP ignores the operating confidence entirely.
    assert above.ap50 == at_half.ap50 == 1.0


def test_missing_prediction_sets_mean_zero_detections():
    ds = make_dataset("partial", [1, 1])
    only_first = [
        PredictionSet(
            frame_id=ds.frames[0].frame_id,
            detections=(Detection(box=ds.frames[0].objects[0].box, confidence=1.0),),
        )
    ]
    report = evaluate(ds, only_first)
    assert report.recall == 0.5
    assert report.precision == 1.0


def test_unknown_frame_id_error_names_id():
    ds = make_dataset("known", [1])
    stray = [PredictionSet(frame_id="ghost-frame", detections=())]
    with pytest.raises(EvaluationError, match="ghost-frame"):
        evaluate(ds, stray)
    with pytest.raises(EvaluationError, match="ghost-frame"):
        pr_curve(ds, stray, 0.5)


def test_duplicate_prediction_set_rejected():
    ds = make_dataset("dup", [1])
    fid = ds.frames[0].frame_id
    twice = [
        PredictionSet(frame_id=fid, detections=()),
        PredictionSet(frame_id=fid, detections=()),
    ]
    with pytest.raises(EvaluationError, match="duplicate"):
        evaluate(ds, twice)


@pytest.mark.parametrize("bad", [-0.1, 1.0000001, 2.0])
def test_operating_confidence_range(bad):
    ds = make_dataset("rng", [1])
    with pytest.raises(ConfigError):
        evaluate(ds, [], operating_confidence=bad)


def test_duplicate_detections_single_credit():
    """Three identical exact-copy detections of one GT: one TP, two FPs."""
    gt = Box(0, 0, 10, 10)
    ds = one_frame_dataset([gt])
    sets = [
        PredictionSet(
            frame_id="solo-f0",
            detections=(
                Detection(box=gt, confidence=0.9),
                Detection(box=gt, confidence=0.8),
                Detection(box=gt, confidence=0.7),
            ),
        )
    ]
    report = evaluate(ds, sets)
    # Recall saturates with the first copy, so precision at full recall is 1.
    assert report.ap50 == 1.0
    assert report.recall == 1.0
    assert report.precision == pytest.approx(1.0 / 3.0, abs=1e-12)
    curve = pr_curve(ds, sets, 0.5)
    assert curve.points == ((1.0, 1.0), (1.0, 0.5), (1.0, pytest.approx(1.0 / 3.0)))


def test_pooled_tie_order_is_frame_then_index():
    """Equal confidences resolve by frame order: TP-first here, AP50 = 51/101."""
    g1 = Box(0, 0, 10, 10)
    g2 = Box(30, 30, 40, 40)
    frames = (
        FrameRecord(
            frame_id="tie-f0", image_path="unused.png", width=FRAME_W, height=FRAME_H,
            objects=(GroundTruthObject(box=g1),),
        ),
        FrameRecord(
            frame_id="tie-f1", image_path="unused.png", width=FRAME_W, height=FRAME_H,
            objects=(GroundTruthObject(box=g2),),
        ),
    )
    ds = Dataset("tie", frames)
    sets = [
        PredictionSet(frame_id="tie-f0", detections=(Detection(box=g1, confidence=0.7),)),
        PredictionSet(
            frame_id="tie-f1",
            detections=(Detection(box=Box(100, 100, 110, 110), confidence=0.7),),
        ),
    ]
    curve = pr_curve(ds, sets, 0.5)
    assert curve.points == ((0.5, 1.0), (0.5, 0.5))
    assert average_precision(curve) == pytest.approx(51.0 / 101.0, abs=1e-12)


def scene_seeds(n, start=100):
    return range(start, start + n)


def test_recall_monotone_along_curves():
    for seed in scene_seeds(25):
        ds, sets = random_scene(seed)
        report = evaluate(ds, sets)
        for curve in report.curves:
            recalls = curve.recalls
            assert all(a <= b for a, b in zip(recalls, recalls[1:]))


def test_metrics_within_unit_interval():
    for seed in scene_seeds(25):
        ds, sets = random_scene(seed)
        r = evaluate(ds, sets)
        for value in (r.ap50, r.ap75, r.ap, r.precision, r.recall, r.f1):
            assert 0.0 <= value <= 1.0


def test_f1_consistent_with_parts():
    for seed in scene_seeds(25):
        ds, sets = random_scene(seed)
        r = evaluate(ds, sets)
        if r.precision + r.recall > 0:
            expected = 2 * r.precision * r.recall / (r.precision + r.recall)
            assert r.f1 == pytest.approx(expected, abs=1e-12)
        else:
            assert r.f1 == 0.0


def test_stricter_thresholds_never_raise_ap():
    for seed in scene_seeds(40):
        ds, sets = random_scene(seed)
        r = evaluate(ds, sets)
        assert r.ap <= r.ap50 + 1e-12
        assert r.ap75 <= r.ap50 + 1e-12


def test_rank_invariance_of_ap():
    """Strictly monotone confidence transforms leave every AP unchanged."""
    transforms = [lambda c: c * c * c, lambda c: 0.25 + c / 2.0]
    for seed in scene_seeds(20):
        ds, sets = random_scene(seed)
        base = evaluate(ds, sets)
        for tf in transforms:
            mapped = [
                PredictionSet(
                    frame_id=ps.frame_id,
                    detections=tuple(
                        Detection(box=d.box, confidence=tf(d.confidence))
                        for d in ps.detections
                    ),
                )
                for ps in sets
            ]
            got = evaluate(ds, mapped)
            assert got.ap50 == pytest.approx(base.ap50, abs=1e-12)
            assert got.ap75 == pytest.approx(base.ap75, abs=1e-12)
            assert got.ap == pytest.approx(base.ap, abs=1e-12)


def test_fp_removal_never_decreases_ap50():
    checked = 0
    for seed in scene_seeds(20):
        ds, sets = random_scene(seed)
        base = evaluate(ds, sets).ap50
        by_frame = {ps.frame_id: ps for ps in sets}
        for frame in ds.frames:
            ps = by_frame.get(frame.frame_id)
            if ps is None or not ps.detections:
                continue
            result = match_detections(
                [o.box for o in frame.objects], ps.detections, 0.5, frame.frame_id
            )
            matched = {di for di, _, _ in result.pairs}
            for di in range(len(ps.detections)):
                if di in matched:
                    continue
                pruned = [
                    p
                    if p.frame_id != frame.frame_id
                    else PredictionSet(
                        frame_id=p.frame_id,
                        detections=tuple(
                            d for k, d in enumerate(p.detections) if k != di
                        ),
                    )
                    for p in sets
                ]
                assert evaluate(ds, pruned).ap50 >= base - 1e-12
                checked += 1
    assert checked > 50


def test_prediction_order_invariance():
    """Neither the order of sets nor of distinct-confidence detections matters."""
    for seed in scene_seeds(10):
        ds, sets = random_scene(seed)
        base = evaluate(ds, sets)
        rng = SplitMix64(seed * 31 + 1)
        reordered = shuffled(sets, rng.next_u64())
        reordered = [
            PredictionSet(
                frame_id=ps.frame_id,
                detections=tuple(shuffled(ps.detections, rng.next_u64())),
            )
            for ps in reordered
        ]
        # random_scene draws confidences from a 53-bit stream; collisions
        # would make detection order matter, so guard against them.
        for ps in reordered:
            confs = [d.confidence for d in ps.detections]
            assert len(set(confs)) == len(confs)
        got = evaluate(ds, reordered)
        assert got.as_dict() == base.as_dict()

"""Shared fixtures: deterministic images, frame builders, corpus shapes."""
from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pytest
from PIL import Image

from lecturevision.data import Dataset, FrameRecord, GroundTruthObject
from lecturevision.geometry import Box
from lecturevision.predictions import Detection, PredictionSet
from lecturevision.rng import SplitMix64, shuffled

FRAME_W = 640
FRAME_H = 360


@pytest.fixture(scope="session")
def shared_image(tmp_path_factory) -> Path:
    """One small real image every disk-backed fixture frame points at."""
    path = tmp_path_factory.mktemp("assets") / "frame.png"
    arr = np.zeros((18, 24, 3), dtype=np.uint8)
    arr[..., 0] = 200
    arr[..., 1] = 210
    arr[..., 2] = 220
    Image.fromarray(arr).save(path)
    return path


def grid_box(slot: int) -> Box:
    """Deterministic non-overlapping boxes on a grid, up to 10 slots."""
    col = slot % 5
    row = slot // 5
    x0 = 10.0 + col * 124.0
    y0 = 10.0 + row * 130.0
    return Box(x0, y0, x0 + 100.0, y0 + 80.0)


def make_frame(
    frame_id: str,
    n_objects: int,
    image_path: str = "unused.png",
    labeled: bool = True,
) -> FrameRecord:
    objects = tuple(
        GroundTruthObject(box=grid_box(i)) for i in range(n_objects)
    )
    return FrameRecord(
        frame_id=frame_id,
        image_path=image_path,
        width=FRAME_W,
        height=FRAME_H,
        objects=objects if labeled else (),
        labeled=labeled,
    )


def make_dataset(
    name: str,
    object_counts: Sequence[int],
    image_path: str = "unused.png",
) -> Dataset:
    frames = tuple(
        make_frame(f"{name}-f{i:04d}", count, image_path)
        for i, count in enumerate(object_counts)
    )
    return Dataset(name, frames)


@pytest.fixture(scope="session")
def corpus_1k(shared_image) -> Dataset:
    """1000 frames shaped like a small lecture-video corpus.

    196 empty frames, 443 with one object, 307 with three, 54 with four:
    1580 objects, 1.58 per frame, buckets 63.9% / 30.7% / 5.4%.
    """
    counts = [0] * 196 + [1] * 443 + [3] * 307 + [4] * 54
    counts = shuffled(counts, 7)
    frames = tuple(
        make_frame(f"corpus1k/f{i:04d}", c, str(shared_image))
        for i, c in enumerate(counts)
    )
    return Dataset("corpus1k", frames)


def draw_rect(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    img[y0:y1, x0:x1] = color


SLIDE_SIZES = ((640, 360), (800, 450), (512, 384))
SLIDE_SHADES = (250, 238, 244)
SLIDE_PALETTE = (
    (30, 60, 200),
    (200, 50, 50),
    (20, 140, 60),
    (120, 40, 160),
    (220, 130, 20),
    (60, 60, 60),
)


def render_slide(idx: int):
    """Deterministic synthetic slide with known object boxes.

    Returns (HxWx3 uint8 image, list of ground-truth Boxes). Objects live in
    a 2x2 cell grid with at least 24px between them, so they never merge with
    each other, while two-part objects keep an 8px internal gap, well inside
    the merge radius at every slide size. Every third slide carries a thin
    text strip that detectors are expected to ignore; idx % 5 == 0 slides are
    blank.
    """
    w, h = SLIDE_SIZES[idx % len(SLIDE_SIZES)]
    shade = SLIDE_SHADES[idx % len(SLIDE_SHADES)]
    img = np.full((h, w, 3), shade, dtype=np.uint8)
    rng = SplitMix64(1000 + idx)
    margin = 30
    pad = 12
    cell_w = (w - 2 * margin) // 2
    cell_h = (h - 2 * margin) // 2
    boxes: List[Box] = []
    n_objects = idx % 5
    for slot in range(n_objects):
        cx = margin + (slot % 2) * cell_w + pad
        cy = margin + (slot // 2) * cell_h + pad
        avail_w = cell_w - 2 * pad
        avail_h = cell_h - 2 * pad
        color = SLIDE_PALETTE[(idx + slot) % len(SLIDE_PALETTE)]
        if slot % 2 == 1:
            # two-part object: same color halves with an 8px internal gap
            part_w = 10 + rng.below(min(40, (avail_w - 8) // 2 - 9))
            part_h = 50 + rng.below(avail_h - 49)
            x0 = cx + rng.below(avail_w - 2 * part_w - 8 + 1)
            y0 = cy + rng.below(avail_h - part_h + 1)
            draw_rect(img, x0, y0, x0 + part_w, y0 + part_h, color)
            x2 = x0 + part_w + 8
            draw_rect(img, x2, y0, x2 + part_w, y0 + part_h, color)
            boxes.append(Box(float(x0), float(y0), float(x2 + part_w), float(y0 + part_h)))
        else:
            rect_w = 60 + rng.below(avail_w - 59)
            rect_h = 50 + rng.below(avail_h - 49)
            x0 = cx + rng.below(avail_w - rect_w + 1)
            y0 = cy + rng.below(avail_h - rect_h + 1)
            draw_rect(img, x0, y0, x0 + rect_w, y0 + rect_h, color)
            boxes.append(Box(float(x0), float(y0), float(x0 + rect_w), float(y0 + rect_h)))
    if idx % 3 == 0:
        # text strip: 8px tall, wide, below the object grid and off the ring
        tx = (w - 250) // 2
        draw_rect(img, tx, h - 28, tx + 250, h - 20, (40, 40, 40))
    return img, boxes


N_SUITE_SLIDES = 24


@pytest.fixture(scope="session")
def slide_suite():
    """(dataset, images) for the rendered-slide detector suite.

    Frame records carry the exact drawn boxes as ground truth; images maps
    frame_id to the rendered array.
    """
    frames = []
    images = {}
    for idx in range(N_SUITE_SLIDES):
        img, boxes = render_slide(idx)
        fid = f"slides/s{idx:03d}"
        frames.append(
            FrameRecord(
                frame_id=fid,
                image_path="unused.png",
                width=img.shape[1],
                height=img.shape[0],
                objects=tuple(GroundTruthObject(box=b) for b in boxes),
            )
        )
        images[fid] = img
    return Dataset("slides", tuple(frames)), images


def random_scene(
    seed: int,
    max_frames: int = 20,
    max_gt: int = 5,
    max_detections: int = 8,
):
    """Seeded (dataset, predictions) pair for metric cross-checks.

    Detections are a blend of jittered copies of ground truth and spurious
    boxes, so curves have an interesting mix of true and false positives.
    """
    rng = SplitMix64(seed)

    def rand_box() -> Box:
        x0 = rng.unit() * (FRAME_W - 40)
        y0 = rng.unit() * (FRAME_H - 40)
        w = 20 + rng.unit() * 150
        h = 20 + rng.unit() * 120
        return Box(x0, y0, min(FRAME_W, x0 + w), min(FRAME_H, y0 + h))

    def jitter(box: Box, amount: float) -> Optional[Box]:
        vals = [
            box.x_min + (rng.unit() * 2 - 1) * amount,
            box.y_min + (rng.unit() * 2 - 1) * amount,
            box.x_max + (rng.unit() * 2 - 1) * amount,
            box.y_max + (rng.unit() * 2 - 1) * amount,
        ]
        if vals[2] <= vals[0] or vals[3] <= vals[1]:
            return None
        return Box(*vals)

    n_frames = 1 + rng.below(max_frames)
    frames: List[FrameRecord] = []
    sets: List[PredictionSet] = []
    for i in range(n_frames):
        n_gt = rng.below(max_gt + 1)
        gt_boxes = [rand_box() for _ in range(n_gt)]
        objects = tuple(GroundTruthObject(box=b) for b in gt_boxes)
        frames.append(
            FrameRecord(
                frame_id=f"scene{seed}-f{i}",
                image_path="unused.png",
                width=FRAME_W,
                height=FRAME_H,
                objects=objects,
            )
        )
        detections: List[Detection] = []
        budget = rng.below(max_detections + 1)
        for _ in range(budget):
            if gt_boxes and rng.unit() < 0.6:
                base = gt_boxes[rng.below(len(gt_boxes))]
                box = jitter(base, 5 + rng.unit() * 40)
                if box is None:
                    continue
            else:
                box = rand_box()
            detections.append(Detection(box=box, confidence=rng.unit()))
        sets.append(PredictionSet(frame_id=f"scene{seed}-f{i}", detections=tuple(detections)))
    return Dataset(f"scene{seed}", tuple(frames)), sets

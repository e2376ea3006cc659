"""Training-free slide-object detector based on background contrast.

Slide frames have a dominant, near-uniform background. The detector:

1. estimates the background color from the border ring of the frame;
2. marks pixels far from that color as foreground and splits them into
   8-connected components;
3. discards tiny components and text-shaped ones (thin and wide);
4. greedily merges nearby, similarly colored components, since one figure is
   usually several disjoint blobs (axes, bars, caption fragments);
5. emits one detection per merged cluster with a coverage-based confidence.

Meant as a labeled-data-free baseline and a sanity probe, not a rival to a
trained detector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .geometry import Box, box_gap, union_box
from .predictions import Detection

logger = logging.getLogger(__name__)

# pixel-value bins for the component color histograms: 8 bins per channel
_HIST_BINS = 8
_HIST_SHIFT = 256 // _HIST_BINS

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.int32)


@dataclass(frozen=True)
class HeuristicParams:
    """Tunables for the background-contrast detector.

    merge_gap and text_height_max are fractions of the image diagonal and
    image height respectively; the rest are absolute.
    """

    bg_tolerance: float = 12.0      # min RGB distance from background
    min_area: int = 64              # px, components below this are noise
    text_height_max: float = 0.035  # fraction of image height
    text_aspect_min: float = 4.0    # width/height at or above this is a text line
    merge_gap: float = 0.02         # fraction of image diagonal
    color_sim_min: float = 0.5      # histogram intersection needed to merge
    base_confidence: float = 0.25   # added to coverage when scoring clusters

    def __post_init__(self):
        if self.bg_tolerance <= 0 or self.min_area < 1:
            raise ValueError("bg_tolerance must be positive and min_area >= 1")
        if self.text_height_max <= 0 or self.text_aspect_min <= 0:
            raise ValueError("text shape thresholds must be positive")
        if self.merge_gap <= 0 or self.base_confidence < 0:
            raise ValueError("merge_gap must be positive, base_confidence >= 0")
        if not (0.0 <= self.color_sim_min <= 1.0):
            raise ValueError(f"color_sim_min {self.color_sim_min} outside [0, 1]")


@dataclass
class Entity:
    """One connected foreground component."""

    box: Box
    pixel_count: int
    mean_color: Tuple[float, float, float]
    histogram: np.ndarray  # shape (3, 8), sums to 1 over all cells


def estimate_background(image: np.ndarray) -> Tuple[float, float, float]:
    """Dominant border color.

    Looks at the outer 2% ring of the frame, quantizes to 16 levels per
    channel, takes the modal bin (ties go to the darker bin), and returns the
    mean color of the ring pixels in that bin.
    """
    img = _as_rgb_float(image)
    h, w = img.shape[:2]
    tr = max(1, round(0.02 * h))
    tc = max(1, round(0.02 * w))
    ring = np.concatenate(
        [
            img[:tr].reshape(-1, 3),
            img[h - tr:].reshape(-1, 3),
            img[tr:h - tr, :tc].reshape(-1, 3),
            img[tr:h - tr, w - tc:].reshape(-1, 3),
        ],
        axis=0,
    )
    bins = np.clip(ring.astype(np.int64) // 16, 0, 15)
    keys = bins[:, 0] * 256 + bins[:, 1] * 16 + bins[:, 2]
    counts = np.bincount(keys, minlength=4096)
    best = -1
    best_count = 0
    for key in range(4096):
        c = counts[key]
        if c == 0:
            continue
        if c > best_count:
            best, best_count = key, c
        elif c == best_count:
            # tie: prefer the darker bin, then the lexicographically smaller
            kb = (key // 256, (key // 16) % 16, key % 16)
            bb = (best // 256, (best // 16) % 16, best % 16)
            if sum(kb) < sum(bb) or (sum(kb) == sum(bb) and kb < bb):
                best = key
    mask = keys == best
    mean = ring[mask].mean(axis=0)
    return (float(mean[0]), float(mean[1]), float(mean[2]))


def segment_entities(
    image: np.ndarray,
    background: Tuple[float, float, float],
    params: Optional[HeuristicParams] = None,
) -> List[Entity]:
    """Foreground components at least min_area pixels large, scan order."""
    params = params or HeuristicParams()
    img = _as_rgb_float(image)
    diff = img - np.asarray(background, dtype=np.float64)
    dist = np.sqrt((diff * diff).sum(axis=2))
    mask = dist > params.bg_tolerance
    labels, n_labels = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    entities: List[Entity] = []
    for slc, label in zip(ndimage.find_objects(labels), range(1, n_labels + 1)):
        if slc is None:
            continue
        component = labels[slc] == label
        count = int(component.sum())
        if count < params.min_area:
            continue
        rows, cols = slc
        box = Box(float(cols.start), float(rows.start), float(cols.stop), float(rows.stop))
        pixels = img[slc][component]
        mean = pixels.mean(axis=0)
        hist = _color_histogram(pixels)
        entities.append(
            Entity(
                box=box,
                pixel_count=count,
                mean_color=(float(mean[0]), float(mean[1]), float(mean[2])),
                histogram=hist,
            )
        )
    return entities


def classify_text_like(entity: Entity, image_width: int, image_height: int,
                       params: Optional[HeuristicParams] = None) -> bool:
    """True when the component is shaped like a text line.

    Thin (height at most text_height_max of the image) and wide (aspect at
    least text_aspect_min), both bounds inclusive.
    """
    params = params or HeuristicParams()
    height = entity.box.height
    if height <= 0:
        return False
    thin = height <= params.text_height_max * image_height
    wide = (entity.box.width / height) >= params.text_aspect_min
    return thin and wide


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap of two normalized color histograms, in [0, 1]."""
    return float(np.minimum(a, b).sum())


def cluster_entities(
    entities: Sequence[Entity],
    image_width: int,
    image_height: int,
    params: Optional[HeuristicParams] = None,
) -> List[Detection]:
    """Merge entities into object detections.

    Repeatedly joins the pair of clusters with the smallest box gap, provided
    the gap is within merge_gap of the image diagonal and the (pixel-count
    weighted) color histograms overlap by at least color_sim_min. Entities
    are canonicalized by position first, so the result does not depend on
    input order. Cluster confidence is the pixel coverage of the cluster box
    plus base_confidence, saturated at 1.
    """
    params = params or HeuristicParams()
    max_gap = params.merge_gap * math.hypot(image_width, image_height)

    pool = sorted(
        entities,
        key=lambda e: (e.box.y_min, e.box.x_min, e.box.y_max, e.box.x_max, e.pixel_count),
    )
    clusters = [
        {"box": e.box, "pixels": e.pixel_count, "hist": e.histogram * e.pixel_count}
        for e in pool
    ]

    while len(clusters) > 1:
        best = None  # (gap, i, j)
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                gap = box_gap(clusters[i]["box"], clusters[j]["box"])
                if gap > max_gap:
                    continue
                sim = histogram_intersection(
                    clusters[i]["hist"] / clusters[i]["pixels"],
                    clusters[j]["hist"] / clusters[j]["pixels"],
                )
                if sim < params.color_sim_min:
                    continue
                if best is None or (gap, i, j) < best:
                    best = (gap, i, j)
        if best is None:
            break
        _, i, j = best
        a, b = clusters[i], clusters[j]
        merged = {
            "box": union_box(a["box"], b["box"]),
            "pixels": a["pixels"] + b["pixels"],
            "hist": a["hist"] + b["hist"],
        }
        clusters[i] = merged
        del clusters[j]

    detections = []
    for c in sorted(clusters, key=lambda c: (c["box"].y_min, c["box"].x_min)):
        coverage = c["pixels"] / c["box"].area
        confidence = min(1.0, coverage + params.base_confidence)
        detections.append(Detection(box=c["box"], confidence=confidence))
    return detections


def detect(image: np.ndarray, params: Optional[HeuristicParams] = None) -> List[Detection]:
    """Run the full pipeline on one frame."""
    params = params or HeuristicParams()
    img = _as_rgb_float(image)
    h, w = img.shape[:2]
    background = estimate_background(img)
    entities = segment_entities(img, background, params)
    kept = [e for e in entities if not classify_text_like(e, w, h, params)]
    if len(kept) != len(entities):
        logger.debug("dropped %d text-like components", len(entities) - len(kept))
    return cluster_entities(kept, w, h, params)


def _as_rgb_float(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB image, got shape {arr.shape}")
    return arr.astype(np.float64)


def _color_histogram(pixels: np.ndarray) -> np.ndarray:
    """Per-channel 8-bin histogram, normalized so all 24 cells sum to 1."""
    hist = np.zeros((3, _HIST_BINS), dtype=np.float64)
    idx = np.clip(pixels.astype(np.int64) // _HIST_SHIFT, 0, _HIST_BINS - 1)
    for ch in range(3):
        hist[ch] = np.bincount(idx[:, ch], minlength=_HIST_BINS)[:_HIST_BINS]
    return hist / hist.sum()

"""Axis-aligned boxes in absolute pixel coordinates and their arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, corners in pixels, x right, y down.

    Construction enforces finite coordinates and strictly positive area.
    Boxes read from files are clamped to image bounds before construction;
    see formats.parse_normalized_annotation.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box coordinate {name}={v!r} is not finite")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(
                f"box must have positive area, got "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def iou(a: Box, b: Box) -> float:
    """Intersection over union. Always in [0, 1] for valid boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    if ix <= 0.0:
        return 0.0
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def union_box(a: Box, b: Box) -> Box:
    """Smallest box containing both inputs."""
    return Box(
        min(a.x_min, b.x_min),
        min(a.y_min, b.y_min),
        max(a.x_max, b.x_max),
        max(a.y_max, b.y_max),
    )


def box_gap(a: Box, b: Box) -> float:
    """Separation between two boxes: Euclidean norm of the per-axis gaps.

    The per-axis gap is zero when the projections overlap, so overlapping or
    touching boxes have gap 0.
    """
    gx = max(0.0, max(a.x_min, b.x_min) - min(a.x_max, b.x_max))
    gy = max(0.0, max(a.y_min, b.y_min) - min(a.y_max, b.y_max))
    return math.hypot(gx, gy)


def clamp_box(
    x_min: float, y_min: float, x_max: float, y_max: float,
    width: float, height: float,
) -> Optional[Box]:
    """Clamp corners to [0, width] x [0, height].

    Returns None when nothing with positive area survives, e.g. a box fully
    outside the image or one that collapses onto an edge.
    """
    cx_min = min(max(x_min, 0.0), width)
    cy_min = min(max(y_min, 0.0), height)
    cx_max = min(max(x_max, 0.0), width)
    cy_max = min(max(y_max, 0.0), height)
    if cx_max > cx_min and cy_max > cy_min:
        return Box(cx_min, cy_min, cx_max, cy_max)
    return None

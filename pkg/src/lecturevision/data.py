"""Core dataset model: frames, ground-truth objects, datasets, statistics.

All values are immutable once constructed. Every operation that "modifies" a
dataset returns a new one, so stats can never drift out of sync with frames.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

from .errors import IntegrityError
from .geometry import Box

logger = logging.getLogger(__name__)

SOURCE_MANUAL = "manual"
SOURCE_AUTO = "auto"

# frame_id namespace separator used when datasets are merged
ORIGIN_SEP = "/"


@dataclass(frozen=True)
class GroundTruthObject:
    """One annotated object. Single-class task, so no label field.

    source is "manual" for human annotations and "auto" for machine-generated
    ones; auto objects carry the confidence of the detection that produced
    them, manual objects carry none.
    """

    box: Box
    source: str = SOURCE_MANUAL
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.source not in (SOURCE_MANUAL, SOURCE_AUTO):
            raise ValueError(f"unknown annotation source {self.source!r}")
        if self.source == SOURCE_AUTO:
            if self.confidence is None:
                raise ValueError("auto annotations must carry a confidence")
            if not (0.0 <= self.confidence <= 1.0):
                raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        elif self.confidence is not None:
            raise ValueError("manual annotations must not carry a confidence")


@dataclass(frozen=True)
class FrameRecord:
    """One video frame with its annotations.

    image_path is stored resolved (absolute) so frames from manifests in
    different directories can coexist in a merged dataset; writers emit paths
    relative to whatever manifest they produce.

    labeled distinguishes "annotated, possibly with zero objects" from "no
    annotation available at all": an unlabeled frame has labeled=False and an
    empty objects tuple.
    """

    frame_id: str
    image_path: str
    width: int
    height: int
    objects: Tuple[GroundTruthObject, ...] = ()
    origin: str = ""
    labeled: bool = True

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"frame {self.frame_id}: dimensions {self.width}x{self.height} invalid"
            )
        if not self.labeled and self.objects:
            raise ValueError(f"frame {self.frame_id}: unlabeled frames cannot carry objects")
        for obj in self.objects:
            b = obj.box
            if b.x_min < 0 or b.y_min < 0 or b.x_max > self.width or b.y_max > self.height:
                raise ValueError(
                    f"frame {self.frame_id}: box {b.as_tuple()} outside "
                    f"{self.width}x{self.height}"
                )

    @property
    def n_objects(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class DatasetStats:
    """Corpus-level counts plus the object-count distribution buckets."""

    n_images: int
    n_objects: int
    objects_per_image: float
    bucket_0_1: int   # frames with 0 or 1 objects
    bucket_2_3: int   # frames with 2 or 3 objects
    bucket_4_plus: int  # frames with 4 or more

    def bucket_fractions(self) -> tuple[float, float, float]:
        """Bucket shares of the frame count, zeros for an empty dataset."""
        if self.n_images == 0:
            return (0.0, 0.0, 0.0)
        n = float(self.n_images)
        return (self.bucket_0_1 / n, self.bucket_2_3 / n, self.bucket_4_plus / n)


def compute_stats(frames: Sequence[FrameRecord]) -> DatasetStats:
    """Statistics over a frame collection; buckets partition the frames."""
    n_images = len(frames)
    n_objects = sum(f.n_objects for f in frames)
    b01 = sum(1 for f in frames if f.n_objects <= 1)
    b23 = sum(1 for f in frames if 2 <= f.n_objects <= 3)
    b4 = n_images - b01 - b23
    per_image = (n_objects / n_images) if n_images else 0.0
    return DatasetStats(n_images, n_objects, per_image, b01, b23, b4)


@dataclass(frozen=True)
class Dataset:
    """Named, ordered, immutable collection of frames with unique frame_ids."""

    name: str
    frames: Tuple[FrameRecord, ...]
    stats: DatasetStats = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        seen: set[str] = set()
        for f in self.frames:
            if f.frame_id in seen:
                raise IntegrityError(
                    f"dataset {self.name!r}: duplicate frame_id {f.frame_id!r}"
                )
            seen.add(f.frame_id)
        object.__setattr__(self, "stats", compute_stats(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def frame_ids(self) -> Tuple[str, ...]:
        return tuple(f.frame_id for f in self.frames)

    def frame(self, frame_id: str) -> FrameRecord:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise KeyError(frame_id)

    def subset(self, frame_ids: Iterable[str], name: Optional[str] = None) -> "Dataset":
        """Frames whose ids are listed, keeping this dataset's order."""
        wanted = set(frame_ids)
        missing = wanted - set(self.frame_ids)
        if missing:
            raise KeyError(f"unknown frame_ids: {sorted(missing)[:5]}")
        picked = tuple(f for f in self.frames if f.frame_id in wanted)
        return Dataset(name if name is not None else self.name, picked)

    def with_name(self, name: str) -> "Dataset":
        return Dataset(name, self.frames)

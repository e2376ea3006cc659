"""Detections and the newline-delimited JSON predictions file format.

One line per frame: ``{"frame_id": ..., "detections": [{"x_min": ...,
"y_min": ..., "x_max": ..., "y_max": ..., "confidence": ...}, ...]}``.
Backends write this file; the evaluator and the auto-labeler read it.
Stdlib-only on purpose (see formats module).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

from .errors import LoadError, ProtocolError
from .geometry import Box


@dataclass(frozen=True)
class Detection:
    """One scored box proposed by a detector."""

    box: Box
    confidence: float

    def __post_init__(self):
        if not math.isfinite(self.confidence) or not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class PredictionSet:
    """All detections a model produced for one frame."""

    frame_id: str
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")


def read_predictions(path: str | Path) -> List[PredictionSet]:
    """Parse a predictions file, strictly.

    Any malformed record (bad JSON, missing key, non-positive box area,
    confidence outside [0, 1]) raises ProtocolError naming the line, because
    this file is a machine contract: a backend that emits garbage here is
    broken, not "approximately right".
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read predictions file {path}: {exc}") from exc
    sets: List[PredictionSet] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        try:
            frame_id = record["frame_id"]
            raw_dets = record["detections"]
        except (TypeError, KeyError) as exc:
            raise ProtocolError(f"{path}:{lineno}: missing field {exc}") from exc
        if not isinstance(raw_dets, list):
            raise ProtocolError(f"{path}:{lineno}: detections must be a list")
        detections: List[Detection] = []
        for d in raw_dets:
            try:
                box = Box(
                    float(d["x_min"]), float(d["y_min"]),
                    float(d["x_max"]), float(d["y_max"]),
                )
                detections.append(Detection(box=box, confidence=float(d["confidence"])))
            except (TypeError, KeyError, ValueError) as exc:
                raise ProtocolError(f"{path}:{lineno}: bad detection {d!r}: {exc}") from exc
        try:
            sets.append(PredictionSet(frame_id=frame_id, detections=tuple(detections)))
        except ValueError as exc:
            raise ProtocolError(f"{path}:{lineno}: {exc}") from exc
    return sets


def write_predictions(sets: Sequence[PredictionSet], path: str | Path) -> Path:
    """Write predictions in the newline-delimited format, one frame per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in sets:
        lines.append(
            json.dumps(
                {
                    "frame_id": s.frame_id,
                    "detections": [
                        {
                            "x_min": d.box.x_min,
                            "y_min": d.box.y_min,
                            "x_max": d.box.x_max,
                            "y_max": d.box.y_max,
                            "confidence": d.confidence,
                        }
                        for d in s.detections
                    ],
                },
                sort_keys=True,
            )
        )
    path.write_text("".join(line + "\n" for line in lines))
    return path

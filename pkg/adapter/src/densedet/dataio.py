"""Protocol file I/O: manifests, annotations, predictions.

Implemented from the published file contract, deliberately without importing
the orchestrator package; the files are the interface.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple


class DataFileError(Exception):
    """A manifest, annotation, or image file is missing or malformed."""


@dataclass(frozen=True)
class Frame:
    frame_id: str
    image_path: Path
    width: int
    height: int
    # (x_min, y_min, x_max, y_max) pixel boxes; empty tuple for frames with
    # no annotation file, which train as pure background
    boxes: Tuple[Tuple[float, float, float, float], ...] = field(default_factory=tuple)


def load_frames(manifest_path: str | Path) -> List[Frame]:
    path = Path(manifest_path)
    if not path.is_file():
        raise DataFileError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise DataFileError(f"{path}: manifest must be an object with a 'frames' list")
    base = path.resolve().parent
    coco_cache: dict[Path, dict] = {}
    frames: List[Frame] = []
    for i, entry in enumerate(doc["frames"]):
        try:
            frame_id = entry["frame_id"]
            image_path = (base / entry["image_path"]).resolve()
            width = int(entry["width"])
            height = int(entry["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFileError(f"{path}: frame entry {i} malformed: {exc}") from exc
        ann = entry.get("annotation_path")
        boxes: Tuple[Tuple[float, float, float, float], ...] = ()
        if ann:
            ann_path = (base / ann).resolve()
            if ann_path.suffix.lower() == ".json":
                if ann_path not in coco_cache:
                    coco_cache[ann_path] = _load_coco(ann_path)
                boxes = _coco_boxes(coco_cache[ann_path], ann_path, frame_id,
                                    image_path, width, height)
            else:
                boxes = _normalized_boxes(ann_path, width, height)
        frames.append(Frame(frame_id, image_path, width, height, boxes))
    return frames


def _clamp(x0: float, y0: float, x1: float, y1: float,
           w: float, h: float) -> Optional[Tuple[float, float, float, float]]:
    x0, y0 = max(0.0, x0), max(0.0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1, y1)


def _normalized_boxes(path: Path, width: int, height: int):
    if not path.is_file():
        raise DataFileError(f"annotation file not found: {path}")
    boxes = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise DataFileError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            _, xc, yc, w, h = (float(v) for v in fields)
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: non-numeric field") from exc
        box = _clamp((xc - w / 2) * width, (yc - h / 2) * height,
                     (xc + w / 2) * width, (yc + h / 2) * height,
                     float(width), float(height))
        if box is not None:
            boxes.append(box)
    return tuple(boxes)


def _load_coco(path: Path) -> dict:
    if not path.is_file():
        raise DataFileError(f"annotation file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("images", "annotations"):
        if not isinstance(doc.get(key), list):
            raise DataFileError(f"{path}: missing or invalid {key!r} section")
    return doc


def _coco_boxes(doc: dict, doc_path: Path, frame_id: str, image_path: Path,
                width: int, height: int):
    image_id = None
    for img in doc["images"]:
        if img.get("frame_id") == frame_id or (
            "frame_id" not in img
            and os.path.basename(str(img.get("file_name", ""))) == image_path.name
        ):
            image_id = img["id"]
            break
    if image_id is None:
        raise DataFileError(f"{doc_path}: no image entry for frame {frame_id!r}")
    boxes = []
    for ann in doc["annotations"]:
        if ann.get("image_id") != image_id:
            continue
        bbox = ann.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise DataFileError(f"{doc_path}: annotation {ann.get('id')} has invalid bbox")
        x, y, w, h = (float(v) for v in bbox)
        box = _clamp(x, y, x + w, y + h, float(width), float(height))
        if box is not None:
            boxes.append(box)
    return tuple(boxes)


def write_predictions(records, out_file: str | Path) -> Path:
    """One JSON line per frame: {frame_id, detections:[{x/y min/max, confidence}]}."""
    out = Path(out_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for frame_id, detections in records:
        lines.append(json.dumps({
            "frame_id": frame_id,
            "detections": [
                {
                    "x_min": x0, "y_min": y0, "x_max": x1, "y_max": y1,
                    "confidence": conf,
                }
                for (x0, y0, x1, y1, conf) in detections
            ],
        }, sort_keys=True))
    out.write_text("".join(line + "\n" for line in lines))
    return out

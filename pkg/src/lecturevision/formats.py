"""On-disk formats: dataset manifests, per-frame annotation files.

Three artifacts, all plain text:

* manifest: JSON object ``{"name": ..., "frames": [...]}``. Each frame entry
  carries frame_id, image_path, width, height, and an optional
  annotation_path. Paths are relative to the manifest's directory. A frame
  without annotation_path is unlabeled.
* normalized text annotations: one object per line,
  ``<class> <x_center> <y_center> <width> <height>``, all but the class
  normalized to [0, 1] by image dimensions. Single-class task, class is 0 on
  emit and ignored on parse.
* coco document: one JSON file for a whole dataset with images, annotations
  (absolute-pixel ``[x, y, width, height]`` bbox), and a single category
  named "visual_object". Auto-generated objects round-trip their confidence
  through an optional "score" field; normalized text cannot carry it.

This module must stay importable without numpy/scipy: the mock backend runs
it in a bare subprocess on every invocation.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .data import (
    ORIGIN_SEP,
    SOURCE_AUTO,
    SOURCE_MANUAL,
    Dataset,
    FrameRecord,
    GroundTruthObject,
)
from .errors import (
    DegenerateBoxError,
    IntegrityError,
    LoadError,
    ParseError,
    RangeError,
)
from .geometry import Box, clamp_box

logger = logging.getLogger(__name__)

# Slack allowed on normalized values before they count as out of range.
RANGE_TOLERANCE = 1e-6

CATEGORY_NAME = "visual_object"


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: str
    image_path: Path          # resolved against the manifest directory
    width: int
    height: int
    annotation_path: Optional[Path]  # resolved; None means unlabeled


@dataclass(frozen=True)
class Manifest:
    name: str
    path: Path
    entries: Tuple[ManifestEntry, ...]


def parse_normalized_annotation(line: str, width: int, height: int) -> GroundTruthObject:
    """Parse one normalized annotation line into a manual ground-truth object.

    The box is denormalized to pixels and clamped to the image. Values
    outside [0, 1] by more than RANGE_TOLERANCE raise RangeError; a box with
    no positive area left after clamping raises DegenerateBoxError.
    """
    fields = line.split()
    if len(fields) != 5:
        raise ParseError(f"expected 5 fields, got {len(fields)}: {line!r}")
    try:
        values = [float(v) for v in fields]
    except ValueError as exc:
        raise ParseError(f"non-numeric field in {line!r}") from exc
    xc, yc, w, h = values[1], values[2], values[3], values[4]
    for name, v in (("x_center", xc), ("y_center", yc), ("width", w), ("height", h)):
        if v < -RANGE_TOLERANCE or v > 1.0 + RANGE_TOLERANCE:
            raise RangeError(f"{name}={v} outside [0, 1] in {line!r}")
    box = clamp_box(
        (xc - w / 2.0) * width,
        (yc - h / 2.0) * height,
        (xc + w / 2.0) * width,
        (yc + h / 2.0) * height,
        float(width),
        float(height),
    )
    if box is None:
        raise DegenerateBoxError(f"degenerate box after clamping: {line!r}")
    return GroundTruthObject(box=box, source=SOURCE_MANUAL)


def emit_normalized_annotation(obj: GroundTruthObject, width: int, height: int) -> str:
    """Inverse of parse_normalized_annotation, 6 decimal places."""
    b = obj.box
    xc = (b.x_min + b.x_max) / 2.0 / width
    yc = (b.y_min + b.y_max) / 2.0 / height
    w = b.width / width
    h = b.height / height
    return f"0 {xc:.6f} {yc:.6f} {w:.6f} {h:.6f}"


def _read_normalized_file(path: Path, width: int, height: int) -> List[GroundTruthObject]:
    objects: List[GroundTruthObject] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read annotation file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            objects.append(parse_normalized_annotation(line, width, height))
        except DegenerateBoxError:
            logger.warning("%s:%d: dropping degenerate box", path, lineno)
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return objects


def _load_coco_document(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise LoadError(f"cannot read annotation file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise ParseError(f"{path}: missing or invalid {key!r} section")
    return doc


def _coco_objects_for_frame(
    doc: dict, doc_path: Path, frame: ManifestEntry
) -> List[GroundTruthObject]:
    image_id = None
    for img in doc["images"]:
        if img.get("frame_id") == frame.frame_id or (
            "frame_id" not in img
            and os.path.basename(str(img.get("file_name", ""))) == frame.image_path.name
        ):
            image_id = img["id"]
            break
    if image_id is None:
        raise ParseError(f"{doc_path}: no image entry for frame {frame.frame_id!r}")
    objects: List[GroundTruthObject] = []
    for ann in doc["annotations"]:
        if ann.get("image_id") != image_id:
            continue
        bbox = ann.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise ParseError(f"{doc_path}: annotation {ann.get('id')} has invalid bbox")
        x, y, w, h = (float(v) for v in bbox)
        box = clamp_box(x, y, x + w, y + h, float(frame.width), float(frame.height))
        if box is None:
            logger.warning(
                "%s: dropping degenerate bbox %s for frame %s", doc_path, bbox, frame.frame_id
            )
            continue
        score = ann.get("score")
        source = ann.get("source", SOURCE_AUTO if score is not None else SOURCE_MANUAL)
        objects.append(
            GroundTruthObject(
                box=box,
                source=source,
                confidence=float(score) if score is not None else None,
            )
        )
    return objects


def load_manifest(manifest_path: str | Path) -> Manifest:
    """Read and validate a manifest file; paths come back resolved."""
    path = Path(manifest_path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise LoadError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "frames" not in doc:
        raise ParseError(f"{path}: manifest must be an object with a 'frames' list")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ParseError(f"{path}: manifest 'name' missing or empty")
    base = path.resolve().parent
    entries: List[ManifestEntry] = []
    for i, entry in enumerate(doc["frames"]):
        try:
            frame_id = entry["frame_id"]
            image_path = entry["image_path"]
            width = int(entry["width"])
            height = int(entry["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: frame entry {i} malformed: {exc}") from exc
        ann = entry.get("annotation_path")
        entries.append(
            ManifestEntry(
                frame_id=frame_id,
                image_path=(base / image_path).resolve(),
                width=width,
                height=height,
                annotation_path=(base / ann).resolve() if ann else None,
            )
        )
    return Manifest(name=name, path=path.resolve(), entries=tuple(entries))


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load the dataset a manifest describes.

    Missing image files and duplicate frame_ids are hard errors naming the
    offending frame; degenerate annotation boxes are dropped with a warning.
    """
    manifest = load_manifest(manifest_path)
    coco_cache: Dict[Path, dict] = {}
    frames: List[FrameRecord] = []
    for entry in manifest.entries:
        if not entry.image_path.is_file():
            raise LoadError(
                f"frame {entry.frame_id!r}: image not found: {entry.image_path}"
            )
        labeled = entry.annotation_path is not None
        objects: List[GroundTruthObject] = []
        if labeled:
            ann_path = entry.annotation_path
            if ann_path.suffix.lower() == ".json":
                if ann_path not in coco_cache:
                    coco_cache[ann_path] = _load_coco_document(ann_path)
                objects = _coco_objects_for_frame(coco_cache[ann_path], ann_path, entry)
            else:
                objects = _read_normalized_file(ann_path, entry.width, entry.height)
        origin = (
            entry.frame_id.split(ORIGIN_SEP, 1)[0]
            if ORIGIN_SEP in entry.frame_id
            else manifest.name
        )
        frames.append(
            FrameRecord(
                frame_id=entry.frame_id,
                image_path=str(entry.image_path),
                width=entry.width,
                height=entry.height,
                objects=tuple(objects),
                origin=origin,
                labeled=labeled,
            )
        )
    return Dataset(name=manifest.name, frames=tuple(frames))


def _safe_stem(frame_id: str) -> str:
    out = []
    for ch in frame_id:
        out.append(ch if ch.isalnum() or ch in "-_." else "__")
    return "".join(out)


def _relative_to(target: str | Path, base: Path) -> str:
    return os.path.relpath(str(Path(target).resolve()), str(base.resolve()))


def save_dataset(
    dataset: Dataset,
    out_dir: str | Path,
    fmt: str = "normalized_text",
) -> Path:
    """Write a dataset's manifest and annotations under out_dir.

    Images are referenced in place, never copied. Returns the manifest path.
    Unlabeled frames get no annotation_path. With fmt="normalized_text" every
    labeled frame gets its own (possibly empty) file under annotations/; with
    fmt="coco_document" one annotations.json holds everything. Confidence on
    auto objects survives only the coco route.
    """
    if fmt not in ("normalized_text", "coco_document"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames_doc: List[dict] = []

    if fmt == "normalized_text":
        ann_dir = out / "annotations"
        ann_dir.mkdir(exist_ok=True)
        used: set[str] = set()
        for frame in dataset.frames:
            entry = {
                "frame_id": frame.frame_id,
                "image_path": _relative_to(frame.image_path, out),
                "width": frame.width,
                "height": frame.height,
            }
            if frame.labeled:
                stem = _safe_stem(frame.frame_id)
                if stem in used:
                    raise IntegrityError(f"annotation filename collision for {frame.frame_id!r}")
                used.add(stem)
                ann_path = ann_dir / f"{stem}.txt"
                lines = [
                    emit_normalized_annotation(obj, frame.width, frame.height)
                    for obj in frame.objects
                ]
                ann_path.write_text("".join(line + "\n" for line in lines))
                entry["annotation_path"] = _relative_to(ann_path, out)
            frames_doc.append(entry)
    else:
        doc = build_coco_document(dataset)
        coco_path = out / "annotations.json"
        coco_path.write_text(json.dumps(doc, indent=2, sort_keys=True))
        for frame in dataset.frames:
            entry = {
                "frame_id": frame.frame_id,
                "image_path": _relative_to(frame.image_path, out),
                "width": frame.width,
                "height": frame.height,
            }
            if frame.labeled:
                entry["annotation_path"] = coco_path.name
            frames_doc.append(entry)

    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps({"name": dataset.name, "frames": frames_doc}, indent=2)
    )
    return manifest_path


def build_coco_document(dataset: Dataset) -> dict:
    """Dataset as a single coco-style document (labeled frames only)."""
    images: List[dict] = []
    annotations: List[dict] = []
    ann_id = 1
    for image_id, frame in enumerate(dataset.frames, start=1):
        if not frame.labeled:
            continue
        images.append(
            {
                "id": image_id,
                "frame_id": frame.frame_id,
                "file_name": os.path.basename(frame.image_path),
                "width": frame.width,
                "height": frame.height,
            }
        )
        for obj in frame.objects:
            b = obj.box
            record = {
                "id": ann_id,
                "image_id": image_id,
                "category_id": 1,
                "bbox": [b.x_min, b.y_min, b.width, b.height],
                "area": b.area,
                "iscrowd": 0,
                "source": obj.source,
            }
            if obj.confidence is not None:
                record["score"] = obj.confidence
            annotations.append(record)
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": CATEGORY_NAME}],
    }


def write_unlabeled_manifest(
    frames: Sequence[FrameRecord] | Dataset,
    manifest_path: str | Path,
    name: Optional[str] = None,
) -> Path:
    """Write a manifest that lists frames without any annotation paths.

    This is the hand-off format for frames awaiting automatic annotation.
    """
    if isinstance(frames, Dataset):
        if name is None:
            name = frames.name
        frames = frames.frames
    if name is None:
        raise ValueError("name required when frames is not a Dataset")
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.resolve().parent
    doc = {
        "name": name,
        "frames": [
            {
                "frame_id": f.frame_id,
                "image_path": _relative_to(f.image_path, base),
                "width": f.width,
                "height": f.height,
            }
            for f in frames
        ],
    }
    path.write_text(json.dumps(doc, indent=2))
    return path

from __future__ import annotations

import json
from pathlib import Path

import pytest

from lecturevision.data import Dataset, FrameRecord, GroundTruthObject
from lecturevision.errors import (
    DegenerateBoxError,
    IntegrityError,
    LoadError,
    ParseError,
    RangeError,
)
from lecturevision.formats import (
    build_coco_document,
    emit_normalized_annotation,
    load_dataset,
    load_manifest,
    parse_normalized_annotation,
    save_dataset,
    write_unlabeled_manifest,
)
from lecturevision.geometry import Box

from conftest import make_dataset, make_frame


# -- normalized annotation lines ---------------------------------------------

def test_parse_pixel_arithmetic():
    # 640x480: xc=0.5 -> 320, w=0.25 -> 160 => x in [240, 400]
    #          yc=0.5 -> 240, h=0.5  -> 240 => y in [120, 360]
    obj = parse_normalized_annotation("0 0.5 0.5 0.25 0.5", 640, 480)
    assert obj.box.as_tuple() == (240.0, 120.0, 400.0, 360.0)
    assert obj.source == "manual"
    assert obj.confidence is None


def test_parse_clamps_overhang():
    # xc=0.95, w=0.2 at 100px: raw [85, 105] -> clamped [85, 100]
    obj = parse_normalized_annotation("0 0.95 0.5 0.2 0.4", 100, 100)
    assert obj.box.as_tuple() == (85.0, 30.0, 100.0, 70.0)


def test_parse_class_field_ignored():
    a = parse_normalized_annotation("0 0.5 0.5 0.2 0.2", 100, 100)
    b = parse_normalized_annotation("7 0.5 0.5 0.2 0.2", 100, 100)
    assert a.box == b.box


def test_parse_field_count_errors():
    with pytest.raises(ParseError):
        parse_normalized_annotation("0 0.5 0.5 0.25", 100, 100)
    with pytest.raises(ParseError):
        parse_normalized_annotation("0 0.5 0.5 0.25 0.5 0.1", 100, 100)
    with pytest.raises(ParseError):
        parse_normalized_annotation("0 0.5 abc 0.25 0.5", 100, 100)


def test_parse_range_tolerance():
    # within 1e-6 of the unit interval: accepted and clamped
    parse_normalized_annotation("0 0.5 0.5 0.2 1.0000009", 100, 100)
    parse_normalized_annotation(f"0 {-9e-7} 0.5 0.5 0.5", 100, 100)
    with pytest.raises(RangeError):
        parse_normalized_annotation("0 0.5 0.5 0.2 1.0000011", 100, 100)
    with pytest.raises(RangeError):
        parse_normalized_annotation("0 -0.01 0.5 0.2 0.2", 100, 100)


def test_parse_degenerate_box():
    with pytest.raises(DegenerateBoxError):
        parse_normalized_annotation("0 0.5 0.5 0.0 0.5", 100, 100)
    # positive size but fully off-image after clamping is impossible when
    # values are in [0,1]; zero height is the other degenerate route
    with pytest.raises(DegenerateBoxError):
        parse_normalized_annotation("0 0.5 0.5 0.5 0.0", 100, 100)


def test_emit_parse_round_trip_precision():
    box = Box(123.456, 78.901, 470.011, 359.5)
    obj = GroundTruthObject(box=box)
    line = emit_normalized_annotation(obj, 640, 360)
    back = parse_normalized_annotation(line, 640, 360)
    # six emitted decimals: error below 1e-6 of the image dimension
    for got, want, dim in zip(
        back.box.as_tuple(), box.as_tuple(), (640, 360, 640, 360)
    ):
        assert abs(got - want) <= 1e-6 * dim


def test_emit_format_shape():
    line = emit_normalized_annotation(
        GroundTruthObject(box=Box(0, 0, 320, 180)), 640, 360
    )
    assert line == "0 0.250000 0.250000 0.500000 0.500000"


# -- manifests and datasets on disk ------------------------------------------

def write_tree(tmp_path: Path, dataset: Dataset) -> Path:
    return save_dataset(dataset, tmp_path / "ds")


def test_save_load_round_trip(tmp_path, shared_image):
    ds = make_dataset("rt", [2, 0, 3], image_path=str(shared_image))
    manifest = write_tree(tmp_path, ds)
    loaded = load_dataset(manifest)
    assert loaded.name == "rt"
    assert loaded.frame_ids == ds.frame_ids
    assert loaded.stats == ds.stats
    for orig, back in zip(ds.frames, loaded.frames):
        assert back.labeled
        assert len(back.objects) == len(orig.objects)
        for o, b in zip(orig.objects, back.objects):
            for got, want, dim in zip(
                b.box.as_tuple(), o.box.as_tuple(), (640, 360, 640, 360)
            ):
                assert abs(got - want) <= 1e-6 * dim


def test_manifest_paths_are_relative(tmp_path, shared_image):
    ds = make_dataset("rel", [1], image_path=str(shared_image))
    manifest = write_tree(tmp_path, ds)
    doc = json.loads(manifest.read_text())
    for frame in doc["frames"]:
        assert not frame["image_path"].startswith("/")
        assert not frame["annotation_path"].startswith("/")


def test_empty_annotation_file_means_zero_objects(tmp_path, shared_image):
    ds = make_dataset("empt", [0, 0], image_path=str(shared_image))
    loaded = load_dataset(write_tree(tmp_path, ds))
    assert all(f.labeled and f.n_objects == 0 for f in loaded.frames)


def test_unlabeled_manifest_round_trip(tmp_path, shared_image):
    frames = [
        make_frame("u0", 0, str(shared_image), labeled=False),
        make_frame("u1", 0, str(shared_image), labeled=False),
    ]
    path = write_unlabeled_manifest(frames, tmp_path / "unlabeled.json", name="pool")
    loaded = load_dataset(path)
    assert loaded.name == "pool"
    assert all(not f.labeled for f in loaded.frames)
    manifest = load_manifest(path)
    assert all(e.annotation_path is None for e in manifest.entries)


def test_missing_image_names_frame(tmp_path, shared_image):
    ds = make_dataset("gone", [1], image_path=str(shared_image))
    manifest = write_tree(tmp_path, ds)
    doc = json.loads(manifest.read_text())
    doc["frames"][0]["image_path"] = "nowhere.png"
    manifest.write_text(json.dumps(doc))
    with pytest.raises(LoadError, match="gone-f0000"):
        load_dataset(manifest)


def test_duplicate_frame_id_rejected(tmp_path, shared_image):
    ds = make_dataset("dup", [1, 1], image_path=str(shared_image))
    manifest = write_tree(tmp_path, ds)
    doc = json.loads(manifest.read_text())
    doc["frames"][1]["frame_id"] = doc["frames"][0]["frame_id"]
    manifest.write_text(json.dumps(doc))
    with pytest.raises(IntegrityError, match="duplicate"):
        load_dataset(manifest)


def test_malformed_manifest(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(bad)
    bad.write_text(json.dumps({"frames": []}))
    with pytest.raises(ParseError, match="name"):
        load_manifest(bad)
    with pytest.raises(LoadError):
        load_manifest(tmp_path / "missing.json")


def test_degenerate_annotation_line_dropped_with_warning(tmp_path, shared_image, caplog):
    ds = make_dataset("warn", [1], image_path=str(shared_image))
    manifest = write_tree(tmp_path, ds)
    ann = next((tmp_path / "ds" / "annotations").glob("*.txt"))
    ann.write_text(ann.read_text() + "0 0.5 0.5 0.0 0.5\n")
    with caplog.at_level("WARNING"):
        loaded = load_dataset(manifest)
    assert loaded.frames[0].n_objects == 1  # the good line survived
    assert any("degenerate" in r.message for r in caplog.records)


def test_origin_from_manifest_name_and_frame_id(tmp_path, shared_image):
    ds = make_dataset("ori", [1], image_path=str(shared_image))
    loaded = load_dataset(write_tree(tmp_path, ds))
    # plain ids inherit the manifest name as origin
    assert all(f.origin == "ori" for f in loaded.frames)

    namespaced = Dataset(
        "mix",
        (make_frame("teach/f1", 1, str(shared_image)),),
    )
    loaded = load_dataset(save_dataset(namespaced, tmp_path / "ns"))
    assert loaded.frames[0].origin == "teach"


# -- coco-style documents -----------------------------------------------------

def test_coco_round_trip_exact(tmp_path, shared_image):
    ds = make_dataset("coco", [2, 1, 0], image_path=str(shared_image))
    manifest = save_dataset(ds, tmp_path / "c", fmt="coco_document")
    loaded = load_dataset(manifest)
    assert loaded.frame_ids == ds.frame_ids
    for orig, back in zip(ds.frames, loaded.frames):
        assert [o.box.as_tuple() for o in back.objects] == [
            o.box.as_tuple() for o in orig.objects
        ]


def test_coco_preserves_auto_confidence(tmp_path, shared_image):
    auto = GroundTruthObject(box=Box(10, 10, 60, 60), source="auto", confidence=0.625)
    frame = FrameRecord(
        frame_id="a0", image_path=str(shared_image), width=640, height=360,
        objects=(auto,),
    )
    ds = Dataset("autoc", (frame,))
    loaded = load_dataset(save_dataset(ds, tmp_path / "a", fmt="coco_document"))
    assert loaded.frames[0].objects[0].source == "auto"
    assert loaded.frames[0].objects[0].confidence == 0.625


def test_coco_document_shape():
    ds = make_dataset("shape", [2, 1])
    doc = build_coco_document(ds)
    assert [c["name"] for c in doc["categories"]] == ["visual_object"]
    assert len(doc["images"]) == 2
    assert len(doc["annotations"]) == 3
    ann = doc["annotations"][0]
    x, y, w, h = ann["bbox"]
    box = ds.frames[0].objects[0].box
    assert (x, y, x + w, y + h) == box.as_tuple()
    assert ann["category_id"] == 1


def test_coco_missing_image_entry(tmp_path, shared_image):
    ds = make_dataset("cocoerr", [1], image_path=str(shared_image))
    manifest = save_dataset(ds, tmp_path / "c", fmt="coco_document")
    coco_path = tmp_path / "c" / "annotations.json"
    doc = json.loads(coco_path.read_text())
    doc["images"] = []
    coco_path.write_text(json.dumps(doc))
    with pytest.raises(ParseError, match="cocoerr-f0000"):
        load_dataset(manifest)


def test_save_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        save_dataset(make_dataset("x", [1]), tmp_path / "x", fmt="yaml")

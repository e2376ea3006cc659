"""Toy corpus for smoke tests, written through the orchestrator's own
formats module so every read here doubles as a file-contract check."""
from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from lecturevision.data import Dataset, FrameRecord, GroundTruthObject
from lecturevision.formats import save_dataset
from lecturevision.geometry import Box


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """(dataset, manifest path): two 96x80 slides, one known box each."""
    root = tmp_path_factory.mktemp("toy")
    frames = []
    for i in range(2):
        arr = np.full((80, 96, 3), 240, dtype=np.uint8)
        x0, y0 = 18 + 10 * i, 14 + 8 * i
        arr[y0:y0 + 30, x0:x0 + 40] = (30 + 60 * i, 90, 200 - 60 * i)
        path = root / f"img{i}.png"
        Image.fromarray(arr).save(path)
        frames.append(
            FrameRecord(
                frame_id=f"toy/f{i}",
                image_path=str(path),
                width=96,
                height=80,
                objects=(
                    GroundTruthObject(
                        box=Box(float(x0), float(y0), float(x0 + 40), float(y0 + 30))
                    ),
                ),
            )
        )
    ds = Dataset("toy", tuple(frames))
    manifest = save_dataset(ds, root / "ds")
    return ds, manifest


@pytest.fixture(scope="session")
def trained_model(toy_corpus, tmp_path_factory):
    """A model directory produced by one short training run."""
    from densedet.train import run as train_run

    _, manifest = toy_corpus
    out = tmp_path_factory.mktemp("model") / "m"
    code = train_run([
        "--train", str(manifest), "--val", str(manifest),
        "--init", "scratch", "--out", str(out),
        "--lr", "0.08", "--batch", "2", "--epochs", "60",
        "--frozen", "0", "--seed", "1", "--variant", "nano",
    ])
    assert code == 0
    return out

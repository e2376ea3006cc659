"""Model-directory layout and image tensor loading shared by both commands."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from .dataio import DataFileError, Frame
from .model import INPUT_SIZE, DenseDetector

MODEL_FILENAME = "model.pt"
META_FILENAME = "meta.json"
SUMMARY_FILENAME = "summary.json"


def save_model_dir(
    out_dir: str | Path,
    model: DenseDetector,
    *,
    epochs_total: int,
    epochs_run: int,
    final_val_loss: float,
    initialized_from: str,
    frozen_blocks: int,
    seed: int,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "variant": model.variant,
            "state_dict": model.state_dict(),
            "epochs_total": epochs_total,
        },
        out / MODEL_FILENAME,
    )
    (out / META_FILENAME).write_text(json.dumps({
        "variant": model.variant,
        "epochs_total": epochs_total,
        "initialized_from": initialized_from,
        "frozen_blocks": frozen_blocks,
        "seed": seed,
    }, indent=2, sort_keys=True))
    (out / SUMMARY_FILENAME).write_text(json.dumps({
        "epochs_run": epochs_run,
        "final_val_loss": final_val_loss,
    }))


def load_model_dir(model_dir: str | Path, device: str = "cpu") -> Tuple[DenseDetector, int]:
    """Returns (model on device, epochs trained so far)."""
    path = Path(model_dir) / MODEL_FILENAME
    if not path.is_file():
        raise DataFileError(f"no model checkpoint at {path}")
    payload = torch.load(path, map_location="cpu")
    try:
        model = DenseDetector(payload["variant"])
        model.load_state_dict(payload["state_dict"])
        epochs_total = int(payload.get("epochs_total", 0))
    except (KeyError, TypeError, RuntimeError) as exc:
        raise DataFileError(f"incompatible checkpoint {path}: {exc}") from exc
    model.to(device)
    return model, epochs_total


def image_tensor(frame: Frame, device: str) -> torch.Tensor:
    if not frame.image_path.is_file():
        raise DataFileError(f"frame {frame.frame_id!r}: image not found: {frame.image_path}")
    with Image.open(frame.image_path) as img:
        resized = img.convert("RGB").resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).to(device)


def batch_tensors(
    frames: Sequence[Frame], device: str
) -> Tuple[torch.Tensor, List[List[Tuple[float, float, float, float]]]]:
    """Stacked image batch plus per-image boxes rescaled to network input."""
    images = []
    boxes = []
    for frame in frames:
        images.append(image_tensor(frame, device))
        sx = INPUT_SIZE / frame.width
        sy = INPUT_SIZE / frame.height
        boxes.append([
            (x0 * sx, y0 * sy, x1 * sx, y1 * sy) for (x0, y0, x1, y1) in frame.boxes
        ])
    return torch.stack(images), boxes

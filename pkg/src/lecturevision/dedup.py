"""Near-duplicate frame detection with a difference hash.

Consecutive lecture-video frames are often near-identical; this module
computes a 64-bit gradient hash per frame and drops frames within a Hamming
radius of one already kept.

The hash must be bit-identical across platforms, so the pipeline avoids
library resampling (whose kernels vary by version): grayscale by fixed luma
weights, then an exact area-average reduction to 9x8 in float64, then one
bit per horizontal neighbor pair, packed row-major, most significant bit
first. A constant image hashes to 0.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .data import Dataset, FrameRecord
from .errors import ConfigError, LoadError

logger = logging.getLogger(__name__)

HASH_COLS = 9   # one more than the hash width: bits compare neighbors
HASH_ROWS = 8
DEFAULT_MAX_HAMMING = 10

# ITU-R BT.601 luma weights
_LUMA = (0.299, 0.587, 0.114)


def load_image_rgb(path: str | Path) -> np.ndarray:
    """Decode an image to an HxWx3 uint8 RGB array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as exc:
        raise LoadError(f"image not found: {path}") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise LoadError(f"cannot decode image {path}: {exc}") from exc


def _area_average(gray: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Exact box-average resize: cell (i, j) is the mean of the image over
    [i*H/out_rows, (i+1)*H/out_rows) x [j*W/out_cols, (j+1)*W/out_cols).

    Implemented by integer upsampling (repeat each row out_rows times, each
    column out_cols times) followed by equal-size block means, so fractional
    pixel overlaps become integer multiplicities. Every block then sums the
    same number of terms through the same reduction tree, which keeps the
    result bit-identical across cells of a constant image; weighted-matrix
    formulations lose that to rounding.
    """
    gray = np.asarray(gray, dtype=np.float64)
    h, w = gray.shape
    up = np.repeat(gray, out_rows, axis=0)
    by_rows = up.reshape(out_rows, h, w).sum(axis=1)
    up = np.repeat(by_rows, out_cols, axis=1)
    sums = up.reshape(out_rows, out_cols, w).sum(axis=2)
    return sums / float(h * w)


def perceptual_hash(image: np.ndarray) -> int:
    """64-bit gradient hash of an RGB or grayscale image array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        gray = arr[..., 0] * _LUMA[0] + arr[..., 1] * _LUMA[1] + arr[..., 2] * _LUMA[2]
    elif arr.ndim == 2:
        gray = arr
    else:
        raise ValueError(f"expected HxW or HxWx3 image, got shape {arr.shape}")
    if gray.shape[0] < 1 or gray.shape[1] < 1:
        raise ValueError("empty image")
    small = _area_average(gray, HASH_ROWS, HASH_COLS)
    value = 0
    bit = 0
    for r in range(HASH_ROWS):
        for c in range(HASH_COLS - 1):
            if small[r, c] < small[r, c + 1]:
                value |= 1 << (63 - bit)
            bit += 1
    return value


def hamming_distance(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def frame_hash(frame: FrameRecord) -> int:
    return perceptual_hash(load_image_rgb(frame.image_path))


def dedup(
    dataset: Dataset,
    max_hamming: int = DEFAULT_MAX_HAMMING,
) -> Tuple[Dataset, List[Tuple[str, str, int]]]:
    """Drop frames whose hash is within max_hamming of an earlier kept frame.

    Scans in dataset order, so the earliest frame of a duplicate group
    survives. Returns the filtered dataset and an audit list of
    (kept_frame_id, removed_frame_id, distance) with the closest kept frame
    charged for each removal (ties to the earliest kept frame).
    """
    if max_hamming < 0 or max_hamming > 64:
        raise ConfigError(f"max_hamming must be in [0, 64], got {max_hamming}")
    kept: List[FrameRecord] = []
    kept_hashes: List[int] = []
    removed: List[Tuple[str, str, int]] = []
    for frame in dataset.frames:
        h = frame_hash(frame)
        best_idx = -1
        best_dist = 65
        for idx, kh in enumerate(kept_hashes):
            d = hamming_distance(h, kh)
            if d < best_dist:
                best_dist = d
                best_idx = idx
        if best_idx >= 0 and best_dist <= max_hamming:
            removed.append((kept[best_idx].frame_id, frame.frame_id, best_dist))
        else:
            kept.append(frame)
            kept_hashes.append(h)
    if removed:
        logger.info(
            "%s: removed %d near-duplicate frames (radius %d)",
            dataset.name, len(removed), max_hamming,
        )
    return Dataset(dataset.name, tuple(kept)), removed


def write_dedup_log(
    removed: Sequence[Tuple[str, str, int]], path: str | Path
) -> Path:
    """Audit CSV: kept_frame_id, removed_frame_id, hamming_distance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kept_frame_id", "removed_frame_id", "hamming_distance"])
        for kept_id, removed_id, dist in removed:
            writer.writerow([kept_id, removed_id, dist])
    return path

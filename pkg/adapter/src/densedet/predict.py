"""Prediction command.

Runs a trained model over every frame in a manifest and writes the
newline-delimited predictions file, one record per frame:

    densedet-predict --model DIR --manifest M --out FILE [--seed N]

Confidences are emitted unfiltered; thresholds belong to the caller.
"""
from __future__ import annotations

import argparse
import os
import sys

import torch

from .checkpoint import image_tensor, load_model_dir
from .dataio import DataFileError, load_frames, write_predictions
from .model import DenseDetector, decode
from .train import PRETRAINED_ENV


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densedet-predict", description=__doc__)
    p.add_argument("--model", required=True,
                   help="model directory from densedet-train, or 'pretrained'")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="predictions file to write")
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)
    return p


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        frames = load_frames(args.manifest)
        torch.manual_seed(args.seed)
        if args.model == "pretrained":
            weights_dir = os.environ.get(PRETRAINED_ENV)
            if weights_dir:
                model, _ = load_model_dir(weights_dir, args.device)
            else:
                print(
                    f"densedet-predict: no bundled weights ({PRETRAINED_ENV} unset), "
                    "using a fresh seeded model",
                    file=sys.stderr,
                )
                model = DenseDetector()
                model.to(args.device)
        else:
            model, _ = load_model_dir(args.model, args.device)
        model.eval()
        records = []
        with torch.no_grad():
            for frame in frames:
                raw = model(image_tensor(frame, args.device).unsqueeze(0))[0]
                records.append((frame.frame_id, decode(raw, frame.width, frame.height)))
        out = write_predictions(records, args.out)
    except (DataFileError, ValueError, OSError) as exc:
        print(f"densedet-predict: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(records)} records -> {out}")
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    sys.exit(run())

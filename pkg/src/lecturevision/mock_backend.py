"""Deterministic stand-in backend for tests and dry runs.

Implements the full subprocess protocol (see backend module) without any
learning. Three behaviors:

* echo_gt: predict returns each frame's ground truth as confidence-1.0
  detections; unlabeled frames get empty detection lists.
* perturb_gt: like echo_gt but jitters each box corner by a seeded offset in
  [-noise, +noise] pixels and assigns seeded confidences that approach 1.0
  as noise approaches 0, so noise=0 reproduces echo_gt exactly.
* fixed_file: predict copies a prepared predictions file byte for byte.

Training writes a metadata file and a summary with a deterministic
final_val_loss; no model is actually fit. Runs as
``python -m lecturevision.mock_backend`` and keeps its imports to the
stdlib-only corner of the package so each invocation starts fast.
"""
from __future__ import annotations

import argparse
import json
import shlex
import shutil
import sys
from pathlib import Path
from typing import List, Optional

from .backend import BackendRef, SUMMARY_FILENAME
from .data import Dataset
from .formats import load_dataset, load_manifest
from .geometry import clamp_box
from .predictions import Detection, PredictionSet, write_predictions
from .rng import SplitMix64, derive_seed

BEHAVIORS = ("echo_gt", "perturb_gt", "fixed_file")

# full confidence spread is reached at this jitter amplitude
_CONF_NOISE_SCALE = 25.0


def mock_backend(
    behavior: str = "echo_gt",
    *,
    noise: float = 0.0,
    seed: int = 0,
    fixed_file: Optional[Path] = None,
    workdir: Optional[Path] = None,
    timeout: float = 300.0,
) -> BackendRef:
    """BackendRef whose commands run this module with the given behavior."""
    if behavior not in BEHAVIORS:
        raise ValueError(f"behavior must be one of {BEHAVIORS}, got {behavior!r}")
    if behavior == "fixed_file" and fixed_file is None:
        raise ValueError("fixed_file behavior needs the file to replay")
    base = f"{shlex.quote(sys.executable)} -m lecturevision.mock_backend"
    train = (
        f"{base} train --behavior {behavior}"
        " {TRAIN_MANIFEST} {VAL_MANIFEST} {INIT} {OUT_DIR}"
        " {LR} {BATCH} {EPOCHS} {FROZEN} {SEED}"
    )
    predict = f"{base} predict --behavior {behavior} --noise {noise} --seed {seed}"
    if fixed_file is not None:
        predict += f" --file {shlex.quote(str(fixed_file))}"
    predict += " {MODEL_DIR} {MANIFEST} {OUT_FILE}"
    return BackendRef(
        train_command=train,
        predict_command=predict,
        workdir=workdir or Path.cwd(),
        timeout=timeout,
    )


def _train(args: argparse.Namespace) -> int:
    train_manifest = load_manifest(args.train_manifest)
    val_manifest = load_manifest(args.val_manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_train = len(train_manifest.entries)
    # fake but deterministic: more data and more epochs mean lower loss
    loss = 1.0 / (1.0 + args.epochs) + 1.0 / (2.0 + n_train)
    (out_dir / "model.json").write_text(
        json.dumps(
            {
                "behavior": args.behavior,
                "trained_on": train_manifest.name,
                "n_train": n_train,
                "n_val": len(val_manifest.entries),
                "init": args.init,
                "learning_rate": args.lr,
                "batch_size": args.batch,
                "epochs": args.epochs,
                "frozen_blocks": args.frozen,
                "seed": args.seed,
            },
            indent=2,
        )
    )
    (out_dir / SUMMARY_FILENAME).write_text(
        json.dumps({"epochs_run": args.epochs, "final_val_loss": loss})
    )
    return 0


def _echo_sets(dataset: Dataset, noise: float, seed: int) -> List[PredictionSet]:
    sets: List[PredictionSet] = []
    conf_spread = min(1.0, noise / _CONF_NOISE_SCALE)
    for frame in dataset.frames:
        rng = SplitMix64(derive_seed(seed, frame.frame_id))
        detections = []
        for obj in frame.objects:
            b = obj.box
            if noise > 0.0:
                coords = [
                    v + (2.0 * rng.unit() - 1.0) * noise
                    for v in (b.x_min, b.y_min, b.x_max, b.y_max)
                ]
                jittered = clamp_box(*coords, float(frame.width), float(frame.height))
                if jittered is None:
                    continue
                b = jittered
            confidence = 1.0 - rng.unit() * conf_spread
            detections.append(Detection(box=b, confidence=confidence))
        sets.append(PredictionSet(frame_id=frame.frame_id, detections=tuple(detections)))
    return sets


def _predict(args: argparse.Namespace) -> int:
    model_dir = Path(args.model_dir)
    if not model_dir.is_dir():
        print(f"model directory not found: {model_dir}", file=sys.stderr)
        return 2
    out_file = Path(args.out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    if args.behavior == "fixed_file":
        if not args.file:
            print("fixed_file behavior needs --file", file=sys.stderr)
            return 2
        shutil.copyfile(args.file, out_file)
        return 0
    dataset = load_dataset(args.manifest)
    noise = args.noise if args.behavior == "perturb_gt" else 0.0
    sets = _echo_sets(dataset, noise, args.seed)
    write_predictions(sets, out_file)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lecturevision.mock_backend",
        description="protocol-conforming mock detector backend",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train")
    p_train.add_argument("--behavior", choices=BEHAVIORS, default="echo_gt")
    p_train.add_argument("train_manifest")
    p_train.add_argument("val_manifest")
    p_train.add_argument("init")
    p_train.add_argument("out_dir")
    p_train.add_argument("lr", type=float)
    p_train.add_argument("batch", type=int)
    p_train.add_argument("epochs", type=int)
    p_train.add_argument("frozen", type=int)
    p_train.add_argument("seed", type=int)
    p_train.set_defaults(func=_train)

    p_predict = sub.add_parser("predict")
    p_predict.add_argument("--behavior", choices=BEHAVIORS, default="echo_gt")
    p_predict.add_argument("--noise", type=float, default=0.0)
    p_predict.add_argument("--seed", type=int, default=0)
    p_predict.add_argument("--file", default=None)
    p_predict.add_argument("model_dir")
    p_predict.add_argument("manifest")
    p_predict.add_argument("out_file")
    p_predict.set_defaults(func=_predict)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Training command.

Fine-tunes (or trains from scratch) on a train/val manifest pair and leaves
model state plus a summary.json in the output directory, per the protocol:

    densedet-train --train M --val M --init scratch|pretrained|DIR --out DIR
                   --lr F --batch N --epochs N --frozen N --seed N
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import torch

from . import AdapterConfig
from .checkpoint import load_model_dir, save_model_dir, batch_tensors
from .dataio import DataFileError, load_frames
from .model import DenseDetector, N_BLOCKS, detection_loss, freeze_blocks

PRETRAINED_ENV = "DENSEDET_WEIGHTS"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densedet-train", description=__doc__)
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--val", required=True, help="validation manifest")
    p.add_argument("--init", required=True,
                   help="'scratch', 'pretrained', or a prior output directory")
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--frozen", type=int, default=3, help="backbone blocks to freeze")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default="medium",
                   help="model size tag; ignored when resuming from a directory")
    p.add_argument("--device", default="cpu")
    return p


def _initial_model(init: str, config: AdapterConfig) -> tuple[DenseDetector, int]:
    if init == "scratch":
        return DenseDetector(config.model_variant), 0
    if init == "pretrained":
        weights_dir = os.environ.get(PRETRAINED_ENV)
        if weights_dir:
            return load_model_dir(weights_dir, config.device)
        print(
            f"densedet-train: no bundled weights ({PRETRAINED_ENV} unset), "
            "initializing fresh",
            file=sys.stderr,
        )
        return DenseDetector(config.model_variant), 0
    return load_model_dir(init, config.device)


def _set_train_mode(model: DenseDetector, n_frozen: int) -> None:
    # model.train() flips frozen batchnorms back; re-pin them
    model.train()
    for block in model.blocks[:n_frozen]:
        block.eval()


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = AdapterConfig(
            model_variant=args.variant, device=args.device, frozen_blocks=args.frozen
        )
        if args.epochs <= 0 or args.batch <= 0 or args.lr <= 0:
            raise ValueError("epochs, batch, and lr must all be positive")
        train_frames = load_frames(args.train)
        val_frames = load_frames(args.val)
        if not train_frames:
            raise DataFileError(f"train manifest has no frames: {args.train}")
        if not val_frames:
            raise DataFileError(f"val manifest has no frames: {args.val}")

        torch.manual_seed(args.seed)
        model, prior_epochs = _initial_model(args.init, config)
        model.to(config.device)
        freeze_blocks(model, min(config.frozen_blocks, N_BLOCKS))
        optimizer = torch.optim.SGD(
            (p for p in model.parameters() if p.requires_grad),
            lr=args.lr,
            momentum=0.9,
        )

        generator = torch.Generator().manual_seed(args.seed)
        for _ in range(args.epochs):
            _set_train_mode(model, min(config.frozen_blocks, N_BLOCKS))
            order = torch.randperm(len(train_frames), generator=generator).tolist()
            for start in range(0, len(order), args.batch):
                chunk = [train_frames[i] for i in order[start:start + args.batch]]
                images, boxes = batch_tensors(chunk, config.device)
                optimizer.zero_grad()
                loss = detection_loss(model(images), boxes)
                loss.backward()
                optimizer.step()

        model.eval()
        total = 0.0
        with torch.no_grad():
            for start in range(0, len(val_frames), args.batch):
                chunk = val_frames[start:start + args.batch]
                images, boxes = batch_tensors(chunk, config.device)
                total += float(detection_loss(model(images), boxes)) * len(chunk)
        val_loss = total / len(val_frames)

        save_model_dir(
            args.out,
            model,
            epochs_total=prior_epochs + args.epochs,
            epochs_run=args.epochs,
            final_val_loss=val_loss,
            initialized_from=args.init,
            frozen_blocks=config.frozen_blocks,
            seed=args.seed,
        )
    except (DataFileError, ValueError, OSError) as exc:
        print(f"densedet-train: error: {exc}", file=sys.stderr)
        return 1
    print(
        f"trained {model.variant} for {args.epochs} epochs on "
        f"{len(train_frames)} frames, val loss {val_loss:.6f} -> {args.out}"
    )
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    sys.exit(run())

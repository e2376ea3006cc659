"""Compact anchor-free detector.

Four stride-2 backbone blocks (total stride 16) and a dense head predicting,
per grid cell, an objectness logit plus a box as (center offset within the
cell, width and height as image fractions), all squashed through sigmoids at
decode time. Small enough to fine-tune on CPU in seconds, real enough to
overfit a toy corpus, which is exactly what protocol smoke tests need.
"""
from __future__ import annotations

import torch
from torch import nn

INPUT_SIZE = 128
STRIDE = 16
GRID = INPUT_SIZE // STRIDE
MAX_DETECTIONS = 100

# base channel width per variant; blocks run w, 2w, 4w, 8w
VARIANT_WIDTH = {"nano": 8, "small": 12, "medium": 16, "large": 24}

N_BLOCKS = 4


def _block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class DenseDetector(nn.Module):
    def __init__(self, variant: str = "medium"):
        super().__init__()
        if variant not in VARIANT_WIDTH:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        w = VARIANT_WIDTH[variant]
        widths = [w, 2 * w, 4 * w, 8 * w]
        blocks = []
        c_in = 3
        for c_out in widths:
            blocks.append(_block(c_in, c_out))
            c_in = c_out
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Sequential(
            nn.Conv2d(c_in, c_in, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_in, 5, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        # (B, 5, GRID, GRID): objectness logit, then cx, cy, w, h logits
        return self.head(x)


def freeze_blocks(model: DenseDetector, n: int) -> None:
    """Freeze the first n backbone blocks; beyond N_BLOCKS freezes them all."""
    for i, block in enumerate(model.blocks):
        requires = i >= n
        for p in block.parameters():
            p.requires_grad = requires
        # eval() pins frozen batchnorms to their stored statistics; the
        # training loop re-applies this after every model.train()
        if not requires:
            block.eval()


def build_targets(boxes_per_image, device) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Grid targets for a batch.

    Each ground-truth box lands in the cell holding its center (later boxes
    win collisions). Returns (objectness (B,G,G), box targets (B,G,G,4),
    positive mask (B,G,G)); box targets are already in sigmoid space.
    """
    batch = len(boxes_per_image)
    obj = torch.zeros((batch, GRID, GRID), device=device)
    box_t = torch.zeros((batch, GRID, GRID, 4), device=device)
    for b, boxes in enumerate(boxes_per_image):
        for (x0, y0, x1, y1) in boxes:
            cx = (x0 + x1) / 2.0
            cy = (y0 + y1) / 2.0
            gx = min(GRID - 1, int(cx // STRIDE))
            gy = min(GRID - 1, int(cy // STRIDE))
            obj[b, gy, gx] = 1.0
            box_t[b, gy, gx, 0] = min(1.0, max(0.0, cx / STRIDE - gx))
            box_t[b, gy, gx, 1] = min(1.0, max(0.0, cy / STRIDE - gy))
            box_t[b, gy, gx, 2] = min(1.0, (x1 - x0) / INPUT_SIZE)
            box_t[b, gy, gx, 3] = min(1.0, (y1 - y0) / INPUT_SIZE)
    return obj, box_t, obj > 0.5


def detection_loss(raw: torch.Tensor, boxes_per_image) -> torch.Tensor:
    obj_t, box_t, positive = build_targets(boxes_per_image, raw.device)
    obj_logit = raw[:, 0]
    loss = nn.functional.binary_cross_entropy_with_logits(obj_logit, obj_t)
    if positive.any():
        pred_box = torch.sigmoid(raw[:, 1:5].permute(0, 2, 3, 1)[positive])
        loss = loss + nn.functional.smooth_l1_loss(pred_box, box_t[positive])
    return loss


def decode(raw_single: torch.Tensor, orig_w: int, orig_h: int):
    """Raw (5,G,G) map for one image -> [(x0, y0, x1, y1, confidence), ...].

    Emits every surviving candidate unfiltered by confidence (downstream
    owns thresholds): top MAX_DETECTIONS cells, overlap-suppressed at 0.5.
    """
    from torchvision.ops import nms

    conf = torch.sigmoid(raw_single[0]).reshape(-1)
    box_p = torch.sigmoid(raw_single[1:5]).reshape(4, -1)
    k = min(MAX_DETECTIONS, conf.numel())
    scores, idx = conf.topk(k)
    gy = (idx // GRID).float()
    gx = (idx % GRID).float()
    cx = (gx + box_p[0, idx]) * STRIDE * (orig_w / INPUT_SIZE)
    cy = (gy + box_p[1, idx]) * STRIDE * (orig_h / INPUT_SIZE)
    bw = box_p[2, idx] * orig_w
    bh = box_p[3, idx] * orig_h
    x0 = (cx - bw / 2).clamp(0.0, float(orig_w))
    y0 = (cy - bh / 2).clamp(0.0, float(orig_h))
    x1 = (cx + bw / 2).clamp(0.0, float(orig_w))
    y1 = (cy + bh / 2).clamp(0.0, float(orig_h))
    valid = (x1 > x0) & (y1 > y0)
    boxes = torch.stack([x0, y0, x1, y1], dim=1)[valid]
    scores = scores[valid]
    if boxes.numel() == 0:
        return []
    keep = nms(boxes, scores, iou_threshold=0.5)
    return [
        (
            float(boxes[i, 0]), float(boxes[i, 1]),
            float(boxes[i, 2]), float(boxes[i, 3]),
            float(scores[i]),
        )
        for i in keep.tolist()
    ]

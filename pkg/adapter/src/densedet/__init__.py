"""Neural backend for the file-based detection training protocol.

The orchestrator side of the protocol only ever sees files: dataset
manifests in, model directories and predictions files out. This package owns
everything neural (weights, devices, freezing) behind two commands,
densedet-train and densedet-predict.
"""
from dataclasses import dataclass

VARIANTS = ("nano", "small", "medium", "large")


@dataclass(frozen=True)
class AdapterConfig:
    """Model family knobs, separate from per-run hyperparameters."""

    model_variant: str = "medium"
    device: str = "cpu"
    frozen_blocks: int = 3

    def __post_init__(self):
        if self.model_variant not in VARIANTS:
            raise ValueError(
                f"unknown model_variant {self.model_variant!r}, expected one of {VARIANTS}"
            )
        if not isinstance(self.frozen_blocks, int) or self.frozen_blocks < 0:
            raise ValueError(f"frozen_blocks must be a non-negative integer, got {self.frozen_blocks!r}")
        if not self.device:
            raise ValueError("device must be a non-empty string")


__all__ = ["AdapterConfig", "VARIANTS"]

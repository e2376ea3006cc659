"""Tooling for object detection corpora built from lecture-video frames.

Dataset plumbing (manifests, splits, folds, merge, dedup), a detection
metrics suite with an independent reference implementation, a subprocess
protocol for pluggable training backends, a training-free slide detector,
and orchestration for semi-supervised corpus enrichment experiments.

Heavy dependencies load lazily: importing the package costs only the stdlib
modules, so subprocess entry points start fast. Image and metric code lives
in submodules (lecturevision.evaluation, lecturevision.heuristic, ...).
"""
from __future__ import annotations

__version__ = "0.1.0"

from .data import (
    Dataset,
    DatasetStats,
    FrameRecord,
    GroundTruthObject,
    compute_stats,
)
from .errors import (
    BackendError,
    ConfigError,
    DegenerateBoxError,
    EvaluationError,
    IntegrityError,
    LectureVisionError,
    LoadError,
    OracleRefusal,
    ParseError,
    ProtocolError,
    RangeError,
)
from .geometry import Box, box_gap, clamp_box, iou, union_box
from .matching import MatchResult, match_detections
from .predictions import Detection, PredictionSet, read_predictions, write_predictions

__all__ = [
    "__version__",
    "Box",
    "box_gap",
    "clamp_box",
    "iou",
    "union_box",
    "Dataset",
    "DatasetStats",
    "FrameRecord",
    "GroundTruthObject",
    "compute_stats",
    "Detection",
    "PredictionSet",
    "read_predictions",
    "write_predictions",
    "MatchResult",
    "match_detections",
    "LectureVisionError",
    "ConfigError",
    "ParseError",
    "RangeError",
    "DegenerateBoxError",
    "LoadError",
    "IntegrityError",
    "EvaluationError",
    "BackendError",
    "ProtocolError",
    "OracleRefusal",
]

"""Subprocess protocol for training backends.

Detectors are trained and run by external processes so the orchestration
code never imports a deep-learning stack. A backend is a pair of command
templates whose placeholder tokens are filled in per invocation:

train:   {TRAIN_MANIFEST} {VAL_MANIFEST} {INIT} {OUT_DIR} {LR} {BATCH}
         {EPOCHS} {FROZEN} {SEED}
predict: {MODEL_DIR} {MANIFEST} {OUT_FILE}

Contract: a train run exits 0 and leaves OUT_DIR holding the backend's model
state (any files it likes) plus ``summary.json`` with ``epochs_run`` and
``final_val_loss``. INIT is "scratch", "pretrained", or a path to a previous
OUT_DIR to continue from. A predict run exits 0 and writes OUT_FILE in the
newline-delimited predictions format. Nonzero exit or timeout raises
BackendError with captured output; a clean exit that breaks the file
contract raises ProtocolError.
"""
from __future__ import annotations

import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .errors import BackendError, ConfigError, ProtocolError
from .predictions import PredictionSet, read_predictions

logger = logging.getLogger(__name__)

SUMMARY_FILENAME = "summary.json"

TRAIN_PLACEHOLDERS = (
    "{TRAIN_MANIFEST}", "{VAL_MANIFEST}", "{INIT}", "{OUT_DIR}",
    "{LR}", "{BATCH}", "{EPOCHS}", "{FROZEN}", "{SEED}",
)
PREDICT_PLACEHOLDERS = ("{MODEL_DIR}", "{MANIFEST}", "{OUT_FILE}")

INIT_SCRATCH = "scratch"
INIT_PRETRAINED = "pretrained"


@dataclass(frozen=True)
class Hyperparameters:
    """Knobs forwarded verbatim to the backend."""

    learning_rate: float = 0.001
    batch_size: int = 8
    epochs: int = 30
    frozen_blocks: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError(
                f"batch_size and epochs must be positive, got "
                f"{self.batch_size}, {self.epochs}"
            )
        if self.frozen_blocks < 0:
            raise ConfigError(f"frozen_blocks must be >= 0, got {self.frozen_blocks}")


@dataclass(frozen=True)
class TrainingStep:
    """One entry in a model's lineage."""

    dataset_name: str
    n_frames: int
    init: str
    seed: int
    hyperparameters: Hyperparameters

    def as_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "n_frames": self.n_frames,
            "init": self.init,
            "seed": self.seed,
            "learning_rate": self.hyperparameters.learning_rate,
            "batch_size": self.hyperparameters.batch_size,
            "epochs": self.hyperparameters.epochs,
            "frozen_blocks": self.hyperparameters.frozen_blocks,
        }


@dataclass(frozen=True)
class ModelRef:
    """Handle to a trained model: its output directory plus how it got there."""

    path: Path
    lineage: Tuple[TrainingStep, ...] = ()

    def lineage_as_dicts(self) -> List[dict]:
        return [step.as_dict() for step in self.lineage]


@dataclass(frozen=True)
class TrainSummary:
    epochs_run: int
    final_val_loss: float


@dataclass(frozen=True)
class BackendRef:
    """A backend as two command templates run in a working directory."""

    train_command: str
    predict_command: str
    workdir: Path = field(default_factory=Path.cwd)
    timeout: float = 3600.0

    def __post_init__(self):
        for ph in TRAIN_PLACEHOLDERS:
            if ph not in self.train_command:
                raise ConfigError(f"train_command missing placeholder {ph}")
        for ph in PREDICT_PLACEHOLDERS:
            if ph not in self.predict_command:
                raise ConfigError(f"predict_command missing placeholder {ph}")
        if self.timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}")

    def as_dict(self) -> dict:
        return {
            "train_command": self.train_command,
            "predict_command": self.predict_command,
            "workdir": str(self.workdir),
            "timeout": self.timeout,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BackendRef":
        try:
            return cls(
                train_command=doc["train_command"],
                predict_command=doc["predict_command"],
                workdir=Path(doc.get("workdir", ".")),
                timeout=float(doc.get("timeout", 3600.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid backend description: {exc}") from exc


def _fill(template: str, substitutions: dict[str, str]) -> List[str]:
    # Split first, substitute inside tokens after: substituted paths with
    # spaces must stay single argv entries.
    argv = []
    for token in shlex.split(template):
        for placeholder, value in substitutions.items():
            token = token.replace(placeholder, value)
        argv.append(token)
    return argv


def _run(argv: List[str], workdir: Path, timeout: float, what: str) -> subprocess.CompletedProcess:
    logger.debug("%s: %s", what, " ".join(argv))
    try:
        proc = subprocess.run(
            argv,
            cwd=str(workdir),
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        raise BackendError(
            f"{what} timed out after {timeout:.0f}s: {' '.join(argv)}",
            stdout=str(exc.stdout or ""), stderr=str(exc.stderr or ""),
        ) from exc
    except OSError as exc:
        raise BackendError(f"{what} failed to start: {exc}") from exc
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-8:]
        raise BackendError(
            f"{what} exited {proc.returncode}: {' '.join(argv)}\n" + "\n".join(tail),
            stdout=proc.stdout, stderr=proc.stderr,
        )
    return proc


def run_train(
    backend: BackendRef,
    train_manifest: Path,
    val_manifest: Path,
    init: str,
    out_dir: Path,
    hyperparameters: Hyperparameters,
    seed: int,
) -> TrainSummary:
    """Invoke one training run and validate its outputs.

    init is passed through as-is; callers continuing from a model pass
    str(model.path).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    argv = _fill(
        backend.train_command,
        {
            "{TRAIN_MANIFEST}": str(train_manifest),
            "{VAL_MANIFEST}": str(val_manifest),
            "{INIT}": init,
            "{OUT_DIR}": str(out_dir),
            "{LR}": repr(hyperparameters.learning_rate),
            "{BATCH}": str(hyperparameters.batch_size),
            "{EPOCHS}": str(hyperparameters.epochs),
            "{FROZEN}": str(hyperparameters.frozen_blocks),
            "{SEED}": str(seed),
        },
    )
    _run(argv, backend.workdir, backend.timeout, "train")

    summary_path = out_dir / SUMMARY_FILENAME
    if not summary_path.is_file():
        raise ProtocolError(f"train left no {SUMMARY_FILENAME} in {out_dir}")
    try:
        doc = json.loads(summary_path.read_text())
        summary = TrainSummary(
            epochs_run=int(doc["epochs_run"]),
            final_val_loss=float(doc["final_val_loss"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid {summary_path}: {exc}") from exc
    state_files = [p for p in out_dir.iterdir() if p.name != SUMMARY_FILENAME]
    if not state_files:
        raise ProtocolError(f"train left no model state in {out_dir}")
    return summary


def run_predict(
    backend: BackendRef,
    model_dir: Path,
    manifest: Path,
    out_file: Path,
) -> List[PredictionSet]:
    """Invoke one prediction run and parse the predictions it wrote."""
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    argv = _fill(
        backend.predict_command,
        {
            "{MODEL_DIR}": str(model_dir),
            "{MANIFEST}": str(manifest),
            "{OUT_FILE}": str(out_file),
        },
    )
    _run(argv, backend.workdir, backend.timeout, "predict")
    if not out_file.is_file():
        raise ProtocolError(f"predict exited 0 but wrote no {out_file}")
    return read_predictions(out_file)

"""Dataset protocols: seeded splits, cross-validation folds, merge, filters.

Every protocol here is a pure function of (dataset order, seed), built on the
pinned generator in the rng module, so runs reproduce exactly on any machine.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import floor
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .data import ORIGIN_SEP, Dataset, FrameRecord
from .errors import ConfigError, IntegrityError, ParseError
from .rng import shuffled

import logging

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    """Named ratio split. Ratios must be positive and sum to 1."""

    ratios: Tuple[float, ...]
    names: Tuple[str, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(self.ratios))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.ratios) != len(self.names):
            raise ConfigError(
                f"{len(self.ratios)} ratios vs {len(self.names)} names"
            )
        if not self.ratios:
            raise ConfigError("split needs at least one part")
        if len(set(self.names)) != len(self.names):
            raise ConfigError(f"split names must be unique: {self.names}")
        for r in self.ratios:
            if not (r > 0.0):
                raise ConfigError(f"ratios must be positive, got {r}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"ratios must sum to 1, got {sum(self.ratios)}")


def allocate_counts(n: int, ratios: Sequence[float]) -> List[int]:
    """Integer part sizes for n items by largest remainder.

    Leftover units after flooring go to the largest fractional remainders;
    remainder ties break toward the earlier part. Sizes sum to n and every
    part with a positive ratio can still end up empty when n is small.
    """
    targets = [n * r for r in ratios]
    counts = [floor(t) for t in targets]
    leftover = n - sum(counts)
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(targets[i] - counts[i]), i)
    )
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts


def split(dataset: Dataset, spec: SplitSpec) -> List[Dataset]:
    """Partition a dataset by seeded shuffle and largest-remainder sizing.

    Output datasets are named "<dataset>/<part>"; together they contain every
    input frame exactly once.
    """
    if len(dataset) == 0:
        raise ConfigError(f"cannot split empty dataset {dataset.name!r}")
    order = shuffled(range(len(dataset)), spec.seed)
    counts = allocate_counts(len(dataset), spec.ratios)
    parts: List[Dataset] = []
    start = 0
    for name, count in zip(spec.names, counts):
        picked = sorted(order[start : start + count])
        frames = tuple(dataset.frames[i] for i in picked)
        parts.append(Dataset(f"{dataset.name}/{name}", frames))
        start += count
    return parts


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every frame to one cross-validation fold.

    Frozen at creation so repeated stages of a pipeline score against
    identical folds; serialize alongside results for audit.
    """

    dataset_name: str
    k: int
    seed: int
    assignments: Dict[str, int]  # frame_id -> fold index in [0, k)

    def fold_frame_ids(self, fold: int) -> Tuple[str, ...]:
        if not (0 <= fold < self.k):
            raise ConfigError(f"fold {fold} outside [0, {self.k})")
        return tuple(fid for fid, f in self.assignments.items() if f == fold)

    def fold_split(self, dataset: Dataset, fold: int) -> Tuple[Dataset, Dataset]:
        """(training, validation) datasets for one fold.

        The dataset must contain exactly the frames the plan was built from.
        """
        if set(dataset.frame_ids) != set(self.assignments):
            raise IntegrityError(
                f"dataset {dataset.name!r} does not match fold plan for "
                f"{self.dataset_name!r}"
            )
        val_ids = set(self.fold_frame_ids(fold))
        train = tuple(f for f in dataset.frames if f.frame_id not in val_ids)
        val = tuple(f for f in dataset.frames if f.frame_id in val_ids)
        return (
            Dataset(f"{dataset.name}/fold{fold}-train", train),
            Dataset(f"{dataset.name}/fold{fold}-val", val),
        )

    def fold_sizes(self) -> List[int]:
        sizes = [0] * self.k
        for fold in self.assignments.values():
            sizes[fold] += 1
        return sizes

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset_name": self.dataset_name,
                "k": self.k,
                "seed": self.seed,
                "assignments": self.assignments,
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        try:
            doc = json.loads(text)
            plan = cls(
                dataset_name=doc["dataset_name"],
                k=int(doc["k"]),
                seed=int(doc["seed"]),
                assignments={str(k): int(v) for k, v in doc["assignments"].items()},
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid fold plan: {exc}") from exc
        for fid, fold in plan.assignments.items():
            if not (0 <= fold < plan.k):
                raise ParseError(f"frame {fid!r} assigned to fold {fold} outside [0, {plan.k})")
        return plan

    @classmethod
    def load(cls, path: str | Path) -> "FoldPlan":
        return cls.from_json(Path(path).read_text())


def kfold(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    """Assign frames to k folds by seeded shuffle; sizes differ by at most 1.

    The first (n mod k) folds in shuffle order take the extra frame.
    """
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    if k > len(dataset):
        raise ConfigError(
            f"k={k} exceeds dataset size {len(dataset)} for {dataset.name!r}"
        )
    order = shuffled(list(dataset.frame_ids), seed)
    n = len(order)
    base, extra = divmod(n, k)
    assignments: Dict[str, int] = {}
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        for fid in order[start : start + size]:
            assignments[fid] = fold
        start += size
    return FoldPlan(dataset_name=dataset.name, k=k, seed=seed, assignments=assignments)


def merge(datasets: Sequence[Dataset], name: str) -> Dataset:
    """Concatenate datasets under a new name, namespacing frame ids.

    Each frame's id becomes "<origin>/<id>" unless it already carries an
    origin prefix; collisions after namespacing are an integrity error.
    """
    if not datasets:
        raise ConfigError("merge needs at least one dataset")
    frames: List[FrameRecord] = []
    for ds in datasets:
        for f in ds.frames:
            if ORIGIN_SEP in f.frame_id:
                frames.append(f)
            else:
                origin = f.origin or ds.name
                frames.append(
                    FrameRecord(
                        frame_id=f"{origin}{ORIGIN_SEP}{f.frame_id}",
                        image_path=f.image_path,
                        width=f.width,
                        height=f.height,
                        objects=f.objects,
                        origin=origin,
                        labeled=f.labeled,
                    )
                )
    return Dataset(name, tuple(frames))


def filter_no_object_frames(dataset: Dataset) -> Dataset:
    """Drop labeled frames that contain zero objects; keep order otherwise.

    Unlabeled frames are kept: absence of annotations is not evidence of an
    empty frame.
    """
    kept = tuple(f for f in dataset.frames if not f.labeled or f.n_objects > 0)
    dropped = len(dataset.frames) - len(kept)
    if dropped:
        logger.info("%s: filtered %d empty labeled frames", dataset.name, dropped)
    return Dataset(dataset.name, kept)

"""Core data containers and sampling primitives.

A TaskDataset is the unit of streaming arrival: a feature matrix, integer
class labels, and a task identifier. TaskSequence bundles the ordered training
stream with one held-out test set per task. All containers are immutable
after construction (arrays are marked read-only) and safe to share.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .seeding import SeedStream

__all__ = [
    "TaskDataset",
    "TaskSequence",
    "DataError",
    "split_train_test",
    "subsample_indices",
    "load_csv",
    "save_csv",
]


class DataError(ValueError):
    """Raised for malformed datasets, splits, or CSV files."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TaskDataset:
    """n x p feature matrix with aligned class labels for one task.

    Labels are class ids in {0..class_count-1}. Features must be finite.
    """

    features: np.ndarray
    labels: np.ndarray
    task_id: int
    class_count: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {feats.shape}")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise DataError("labels must be a 1-D vector aligned with feature rows")
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite values")
        if self.task_id < 0:
            raise DataError("task_id must be non-negative")
        if self.class_count < 2:
            raise DataError("class_count must be at least 2")
        if labs.min() < 0 or labs.max() >= self.class_count:
            raise DataError(
                f"labels must lie in [0, {self.class_count}), got range "
                f"[{labs.min()}, {labs.max()}]"
            )
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labs))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows: np.ndarray) -> "TaskDataset":
        """Row-subset view with the same task id and class count."""
        return TaskDataset(self.features[rows], self.labels[rows], self.task_id, self.class_count)


@dataclass(frozen=True)
class TaskSequence:
    """Ordered training stream plus one held-out test set per task."""

    train: tuple[TaskDataset, ...]
    test: dict[int, TaskDataset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        ids = [d.task_id for d in self.train]
        if len(set(ids)) != len(ids):
            raise DataError(f"task ids must be unique within a sequence, got {ids}")
        for tid, d in self.test.items():
            if d.task_id != tid:
                raise DataError(f"test set keyed {tid} has task_id {d.task_id}")

    def __len__(self) -> int:
        return len(self.train)

    @property
    def task_ids(self) -> list[int]:
        return [d.task_id for d in self.train]


def split_train_test(
    data: TaskDataset, test_fraction: float, seed: SeedStream
) -> tuple[TaskDataset, TaskDataset]:
    """Random disjoint (train, test) partition of one dataset.

    The test set receives round(n * test_fraction) rows; both parts are
    non-empty or a DataError is raised.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = data.n_samples
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n - n_test < 1:
        raise DataError(f"dataset of size {n} too small to split at fraction {test_fraction}")
    perm = seed.rng().permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return data.take(train_rows), data.take(test_rows)


def subsample_indices(
    n: int, fraction: float, seed: SeedStream, *, with_replacement: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Draw an in-bag subsample and return (in_bag, out_of_bag) index arrays.

    Without replacement (default) the in-bag set has round(fraction * n)
    distinct rows. With replacement it is a same-sized multiset and the
    out-of-bag set is the complement of the rows drawn. Both sets must be
    non-empty.
    """
    if n < 2:
        raise DataError(f"need n >= 2 to subsample, got {n}")
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must be in (0, 1), got {fraction}")
    size = int(round(n * fraction))
    if size < 1 or size >= n:
        raise DataError(f"n={n} at fraction={fraction} leaves an empty in-bag or out-of-bag set")
    rng = seed.rng()
    if with_replacement:
        in_bag = np.sort(rng.integers(0, n, size=size))
        mask = np.ones(n, dtype=bool)
        mask[in_bag] = False
        out_of_bag = np.nonzero(mask)[0]
        if out_of_bag.size == 0:
            raise DataError("bootstrap left no out-of-bag rows")
    else:
        perm = rng.permutation(n)
        in_bag = np.sort(perm[:size])
        out_of_bag = np.sort(perm[size:])
    return in_bag, out_of_bag


# CSV format: header f0..f{p-1},label,task; label and task are non-negative
# integers, features are finite decimals.


def _class_count_per_task(labels_by_task: dict[int, list[int]]) -> dict[int, int]:
    return {tid: max(labs) + 1 for tid, labs in labels_by_task.items()}


def load_csv(path: str, *, class_counts: dict[int, int] | None = None) -> TaskSequence:
    """Load a task stream from CSV, grouping rows by the task column.

    Schema violations are reported with 1-based line numbers. Per-task class
    counts default to max(label)+1 within the task unless given explicitly.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[-2] != "label" or header[-1] != "task":
            raise DataError(f"{path}: header must end with 'label,task', got {header}")
        p = len(header) - 2
        expected = [f"f{i}" for i in range(p)]
        if header[:p] != expected:
            raise DataError(f"{path}: feature columns must be {expected}, got {header[:p]}")

        feats: dict[int, list[list[float]]] = {}
        labs: dict[int, list[int]] = {}
        order: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != p + 2:
                raise DataError(f"{path}:{lineno}: expected {p + 2} columns, got {len(row)}")
            if any(cell.strip() == "" for cell in row):
                raise DataError(f"{path}:{lineno}: missing value")
            try:
                x = [float(v) for v in row[:p]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad feature value ({exc})") from None
            if not all(np.isfinite(x)):
                raise DataError(f"{path}:{lineno}: non-finite feature value")
            try:
                label = int(row[p])
                task = int(row[p + 1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: label and task must be integers") from None
            if label < 0 or task < 0:
                raise DataError(f"{path}:{lineno}: label and task must be non-negative")
            if task not in feats:
                feats[task] = []
                labs[task] = []
                order.append(task)
            feats[task].append(x)
            labs[task].append(label)

    if not order:
        raise DataError(f"{path}: no data rows")
    counts = class_counts or _class_count_per_task(labs)
    datasets = []
    for tid in order:
        k = counts[tid]
        if k < 2:
            k = 2  # single-class task still needs a 2-class label space
        datasets.append(TaskDataset(np.array(feats[tid]), np.array(labs[tid]), tid, k))
    return TaskSequence(train=tuple(datasets))


def save_csv(path: str, datasets: list[TaskDataset] | tuple[TaskDataset, ...]) -> None:
    """Write one or more task datasets in the canonical CSV format."""
    if not datasets:
        raise DataError("nothing to write")
    p = datasets[0].n_features
    if any(d.n_features != p for d in datasets):
        raise DataError("all tasks must share the feature dimension")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(p)] + ["label", "task"])
        for d in datasets:
            for row, label in zip(d.features, d.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(label), d.task_id])

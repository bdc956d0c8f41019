"""Generalization-error estimation and transfer-efficiency ratios.

Errors are 0-1 classification errors on held-out test sets, averaged over
Monte-Carlo repetitions. Transfer efficiency compares the mean error of a
learner that saw only a task's own data against the mean error after seeing
more of the stream:

    te  = err(single task) / err(all data)
    fte = err(single task) / err(up to task)
    bte = err(up to task)  / err(all data)

All three are ratios of the same three mean errors, so te = fte * bte holds
to floating-point round-off by construction. Undefined ratios (zero
denominators) are carried as explicit flags, never as NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import DataError, TaskDataset
from .seeding import SeedStream

__all__ = [
    "SINGLE_TASK",
    "UP_TO_TASK",
    "ALL_DATA",
    "ErrorEstimate",
    "Ratio",
    "TaskTransfer",
    "TransferReport",
    "estimate_error",
    "transfer_efficiency",
    "forward_transfer",
    "backward_transfer",
    "build_transfer",
    "factorization_check",
    "spearman_correlation",
]

SINGLE_TASK = "single_task"
UP_TO_TASK = "up_to_task"
ALL_DATA = "all_data"
_CONDITIONS = (SINGLE_TASK, UP_TO_TASK, ALL_DATA)


@dataclass(frozen=True)
class ErrorEstimate:
    """Per-repetition 0-1 errors for one (task, training condition) pair."""

    task_id: int
    condition: str
    errors: tuple[float, ...]
    n_train: int

    def __post_init__(self):
        if self.condition not in _CONDITIONS:
            raise DataError(f"unknown condition {self.condition!r}")
        if not self.errors:
            raise DataError("need at least one repetition")
        if any(not 0.0 <= e <= 1.0 for e in self.errors):
            raise DataError("errors must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def repetitions(self) -> int:
        return len(self.errors)


@dataclass(frozen=True)
class Ratio:
    """A transfer ratio, or an explicit record of why it is undefined."""

    value: float | None
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    @property
    def log(self) -> float | None:
        if self.value is None or self.value <= 0.0:
            return None
        return math.log(self.value)


def _ratio(numerator: float, denominator: float) -> Ratio:
    if denominator == 0.0:
        return Ratio(None, "zero denominator")
    return Ratio(numerator / denominator)


def estimate_error(
    learner_factory: Callable[[Sequence[TaskDataset], SeedStream], object],
    train_provider: Callable[[SeedStream], Sequence[TaskDataset]],
    test: TaskDataset,
    repetitions: int,
    seed: SeedStream,
    condition: str = ALL_DATA,
) -> ErrorEstimate:
    """Monte-Carlo generalization error of a learner on a fixed test set.

    Each repetition regenerates training data under a derived seed, fits a
    fresh learner, and scores 0-1 error on `test`. The fitted object must
    expose error(test) -> float (both learner types here do).
    """
    if repetitions < 1:
        raise DataError("repetitions must be >= 1")
    if test.n_samples < 1:
        raise DataError("test set is empty")
    errors = []
    n_train = 0
    for r in range(repetitions):
        rep_seed = seed.child("rep", r)
        datasets = list(train_provider(rep_seed.child("data")))
        if not datasets:
            raise DataError("training slice is empty")
        n_train = sum(d.n_samples for d in datasets)
        learner = learner_factory(datasets, rep_seed.child("fit"))
        errors.append(float(learner.error(test)))
    return ErrorEstimate(
        task_id=test.task_id, condition=condition, errors=tuple(errors), n_train=n_train
    )


def _check_pair(a: ErrorEstimate, b: ErrorEstimate, cond_a: str, cond_b: str):
    if a.task_id != b.task_id:
        raise DataError(f"task mismatch: {a.task_id} vs {b.task_id}")
    if a.condition != cond_a or b.condition != cond_b:
        raise DataError(
            f"expected conditions ({cond_a}, {cond_b}), got ({a.condition}, {b.condition})"
        )


def transfer_efficiency(err_single: ErrorEstimate, err_all: ErrorEstimate) -> Ratio:
    """err(single task) / err(all data); > 1 means the other data helped."""
    _check_pair(err_single, err_all, SINGLE_TASK, ALL_DATA)
    return _ratio(err_single.mean, err_all.mean)


def forward_transfer(err_single: ErrorEstimate, err_up_to: ErrorEstimate) -> Ratio:
    """err(single task) / err(up to task): effect of earlier tasks' data."""
    _check_pair(err_single, err_up_to, SINGLE_TASK, UP_TO_TASK)
    return _ratio(err_single.mean, err_up_to.mean)


def backward_transfer(err_up_to: ErrorEstimate, err_all: ErrorEstimate) -> Ratio:
    """err(up to task) / err(all data): effect of later tasks' data."""
    _check_pair(err_up_to, err_all, UP_TO_TASK, ALL_DATA)
    return _ratio(err_up_to.mean, err_all.mean)


@dataclass(frozen=True)
class TaskTransfer:
    task_id: int
    te: Ratio
    fte: Ratio
    bte: Ratio
    n_single: int
    n_total: int
    repetitions: int
    estimates: dict[str, ErrorEstimate] = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class TransferReport:
    tasks: tuple[TaskTransfer, ...]

    def for_task(self, task_id: int) -> TaskTransfer:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)


def build_transfer(
    err_single: ErrorEstimate, err_up_to: ErrorEstimate, err_all: ErrorEstimate
) -> TaskTransfer:
    """Assemble the per-task ratios from the three shared error estimates."""
    reps = {err_single.repetitions, err_up_to.repetitions, err_all.repetitions}
    if len(reps) != 1:
        raise DataError(f"estimates disagree on repetition count: {sorted(reps)}")
    return TaskTransfer(
        task_id=err_single.task_id,
        te=transfer_efficiency(err_single, err_all),
        fte=forward_transfer(err_single, err_up_to),
        bte=backward_transfer(err_up_to, err_all),
        n_single=err_single.n_train,
        n_total=err_all.n_train,
        repetitions=err_single.repetitions,
        estimates={
            SINGLE_TASK: err_single,
            UP_TO_TASK: err_up_to,
            ALL_DATA: err_all,
        },
    )


def factorization_check(report: TransferReport) -> dict[int, float | None]:
    """|te - fte * bte| per task; None where any factor is undefined."""
    residuals: dict[int, float | None] = {}
    for t in report.tasks:
        if t.te.defined and t.fte.defined and t.bte.defined:
            residuals[t.task_id] = abs(t.te.value - t.fte.value * t.bte.value)
        else:
            residuals[t.task_id] = None
    return residuals


def spearman_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise DataError("need two equal-length sequences of at least 2 points")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty_like(v)
        r[order] = np.arange(1, v.size + 1, dtype=np.float64)
        # average ranks within tied groups
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.sum(rx * rx)) * float(np.sum(ry * ry)))
    if denom == 0.0:
        raise DataError("rank variance is zero")
    return float(np.sum(rx * ry) / denom)

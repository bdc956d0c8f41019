"""Posterior estimators over forest representations.

A leaf voter maps each leaf of each tree of one representer to a class
posterior for one target task. The honesty boundary lives here: the in-task
voter counts only out-of-bag rows (the representer's structure never saw
them), while a cross-task voter counts all rows of the target task's data
because the representer was grown on a different task entirely.

Posteriors are plain length-K numpy vectors: non-negative, summing to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataError, TaskDataset
from .forest import ForestRepresenter

__all__ = [
    "LeafVoter",
    "KnnVoter",
    "fit_in_task_voter",
    "fit_cross_task_voter",
    "fit_knn_voter",
    "vote",
    "vote_batch",
    "knn_vote",
    "posterior_from_counts",
    "check_posterior",
]


def check_posterior(p: np.ndarray, class_count: int, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (class_count,):
        raise DataError(f"posterior must have shape ({class_count},), got {p.shape}")
    if (p < 0).any() or abs(p.sum() - 1.0) > tol:
        raise DataError(f"invalid posterior {p}")
    return p


def posterior_from_counts(counts: np.ndarray, smoothing: float) -> np.ndarray:
    """Per-leaf posteriors (c_lk + a) / (c_l + aK); empty leaves get uniform."""
    counts = np.asarray(counts, dtype=np.float64)
    k = counts.shape[-1]
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = (counts + smoothing) / (totals + smoothing * k)
    empty = np.broadcast_to(totals == 0, post.shape)
    return np.where(empty, 1.0 / k, post)


def _count_leaves(leaf_ids: np.ndarray, labels: np.ndarray, n_leaves: int, k: int) -> np.ndarray:
    flat = np.bincount(leaf_ids * k + labels, minlength=n_leaves * k)
    return flat.reshape(n_leaves, k).astype(np.int64)


@dataclass(frozen=True)
class LeafVoter:
    """Per-tree tables of leaf posteriors for one (target task, representer) pair."""

    target_task_id: int
    representer_task_id: int
    class_count: int
    smoothing: float
    counts: tuple[np.ndarray, ...]  # one (L_b, K) integer table per tree
    tables: tuple[np.ndarray, ...]  # matching posterior tables

    @property
    def n_trees(self) -> int:
        return len(self.tables)

    def vote_batch(self, leaf_mat: np.ndarray) -> np.ndarray:
        """Mean of per-tree leaf posteriors; leaf_mat is (n, B) leaf ids."""
        leaf_mat = np.asarray(leaf_mat)
        if leaf_mat.shape[1] != self.n_trees:
            raise DataError(f"expected {self.n_trees} leaf ids per row")
        acc = np.zeros((leaf_mat.shape[0], self.class_count))
        for b, table in enumerate(self.tables):
            ids = leaf_mat[:, b]
            if ids.min() < 0 or ids.max() >= table.shape[0]:
                raise DataError(f"leaf id out of range for tree {b}")
            acc += table[ids]
        return acc / self.n_trees


def _fit_leaf_voter(rep, data, rows_per_tree, smoothing, target_task_id):
    leaf_mat = rep.transform(data.features)  # one batched pass through all trees
    counts = []
    tables = []
    for b, tree in enumerate(rep.trees):
        rows = rows_per_tree[b]
        c = _count_leaves(leaf_mat[rows, b], data.labels[rows], tree.n_leaves, data.class_count)
        counts.append(c)
        tables.append(posterior_from_counts(c, smoothing))
    return LeafVoter(
        target_task_id=target_task_id,
        representer_task_id=rep.source_task_id,
        class_count=data.class_count,
        smoothing=smoothing,
        counts=tuple(counts),
        tables=tuple(tables),
    )


def fit_in_task_voter(
    rep: ForestRepresenter,
    data: TaskDataset,
    oob: tuple[np.ndarray, ...] | None = None,
    smoothing: float = 1.0,
) -> LeafVoter:
    """Honest voter on the representer's own task: counts use OOB rows only."""
    if rep.source_task_id != data.task_id:
        raise DataError(
            f"in-task voter needs the representer's own task data "
            f"(representer task {rep.source_task_id}, data task {data.task_id})"
        )
    oob = rep.oob_indices if oob is None else oob
    if len(oob) != rep.n_trees or any(o.size == 0 for o in oob):
        raise DataError("need one non-empty OOB index set per tree")
    return _fit_leaf_voter(rep, data, oob, smoothing, data.task_id)


def fit_cross_task_voter(
    rep: ForestRepresenter, data: TaskDataset, smoothing: float = 1.0
) -> LeafVoter:
    """Voter for another task's labels: all rows count, honesty is automatic
    because the representer never saw this task's data."""
    if rep.source_task_id == data.task_id:
        raise DataError(
            f"task {data.task_id} is the representer's own task; use the OOB in-task voter"
        )
    all_rows = [np.arange(data.n_samples)] * rep.n_trees
    return _fit_leaf_voter(rep, data, all_rows, smoothing, data.task_id)


def vote(voter: LeafVoter, leaf_ids: np.ndarray) -> np.ndarray:
    """Posterior for one input: arithmetic mean of the per-tree leaf posteriors."""
    return voter.vote_batch(np.asarray(leaf_ids)[None, :])[0]


def vote_batch(voter: LeafVoter, leaf_mat: np.ndarray) -> np.ndarray:
    return voter.vote_batch(leaf_mat)


def knn_default_k(n: int) -> int:
    return min(n, max(1, round(16 * math.log2(n))))


@dataclass(frozen=True)
class KnnVoter:
    """Nearest-neighbour voter on the leaf-membership representation.

    Distances are Euclidean on the concatenated one-hot leaf encoding, which
    is monotone in the number of trees whose leaf disagrees; ties are broken
    by lower stored index.
    """

    target_task_id: int
    representer_task_id: int
    class_count: int
    k: int
    leaf_mat: np.ndarray  # (n, B) stored leaf ids
    labels: np.ndarray  # (n,)

    @property
    def n_stored(self) -> int:
        return self.leaf_mat.shape[0]

    def vote_batch(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries)
        if queries.shape[1] != self.leaf_mat.shape[1]:
            raise DataError("query representation width does not match stored points")
        n_b = self.leaf_mat.shape[1]
        out = np.empty((queries.shape[0], self.class_count))
        # chunked to bound the (q, n) match matrix
        step = max(1, 2_000_000 // max(1, self.n_stored))
        for lo in range(0, queries.shape[0], step):
            q = queries[lo : lo + step]
            matches = (q[:, None, :] == self.leaf_mat[None, :, :]).sum(axis=2)
            dist_sq = 2.0 * (n_b - matches)
            for i in range(q.shape[0]):
                order = np.argsort(dist_sq[i], kind="stable")[: self.k]
                freq = np.bincount(self.labels[order], minlength=self.class_count)
                out[lo + i] = freq / self.k
        return out


def fit_knn_voter(
    rep: ForestRepresenter,
    data: TaskDataset,
    rows: np.ndarray | None = None,
    k: int | None = None,
) -> KnnVoter:
    """Store transformed rows for k-NN voting; k defaults to 16*log2(n), clamped."""
    rows = np.arange(data.n_samples) if rows is None else np.asarray(rows)
    if rows.size == 0:
        raise DataError("cannot fit a k-NN voter on zero rows")
    leaf_mat = rep.transform(data.features[rows])
    n = rows.size
    k = knn_default_k(n) if k is None else int(k)
    if not 1 <= k <= n:
        raise DataError(f"k must be in [1, {n}], got {k}")
    labels = np.ascontiguousarray(data.labels[rows])
    labels.setflags(write=False)
    return KnnVoter(
        target_task_id=data.task_id,
        representer_task_id=rep.source_task_id,
        class_count=data.class_count,
        k=k,
        leaf_mat=leaf_mat,
        labels=labels,
    )


def knn_vote(voter: KnnVoter, leaf_ids: np.ndarray) -> np.ndarray:
    """Class-frequency posterior over the k nearest stored points."""
    if voter.n_stored == 0:
        raise DataError("empty k-NN voter")
    return voter.vote_batch(np.asarray(leaf_ids)[None, :])[0]

"""Honest decision-forest representers.

A tree's structure is learned from its in-bag subsample only; the structure
maps any input to a leaf id, so a forest of B trees maps an input to a
B-sparse one-hot representation (here carried as the length-B list of leaf
ids). Out-of-bag rows never influence a split and are recorded per tree for
honest posterior estimation downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .data import DataError, TaskDataset, subsample_indices
from .seeding import SeedStream

__all__ = [
    "Leaf",
    "Internal",
    "TreeNode",
    "Tree",
    "ForestConfig",
    "ForestRepresenter",
    "SplitCandidate",
    "best_split",
    "grow_tree",
    "fit_representer",
]

# Impurity decreases within this tolerance are treated as ties (and a zero
# decrease, for the split-anyway fallback on impure nodes).
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class Leaf:
    leaf_id: int


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters. Defaults follow the 500-samples-per-task setup."""

    n_estimators: int = 10
    max_depth: int = 30
    max_samples: float = 0.67
    min_samples_leaf: int = 1
    split_criterion: str = "gini"
    bootstrap_replace: bool = False  # opt-in with-replacement bagging
    max_features: Optional[int] = None  # None = consider every feature

    def __post_init__(self):
        if self.n_estimators < 1:
            raise DataError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if not 0.0 < self.max_samples < 1.0:
            raise DataError("max_samples must be in (0, 1)")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")
        if self.split_criterion not in ("gini", "entropy"):
            raise DataError(f"unknown split criterion {self.split_criterion!r}")
        if self.max_features is not None and self.max_features < 1:
            raise DataError("max_features must be >= 1 or None")


class SplitCandidate(NamedTuple):
    feature_index: int
    threshold: float
    impurity_decrease: float


def _impurity(counts: np.ndarray, criterion: str) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    if criterion == "gini":
        return float(1.0 - np.sum(p * p))
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _scan_feature(values, labels_onehot, parent_impurity, criterion, min_samples_leaf):
    """Best (threshold, decrease) for one feature, or None.

    Thresholds are midpoints of adjacent distinct sorted values; among ties
    within GAIN_TOL the lowest threshold wins.
    """
    m = values.shape[0]
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(labels_onehot[order], axis=0)  # (m, K) left-side class counts
    total = cum[-1]

    boundary = np.nonzero(v[:-1] < v[1:])[0]
    if min_samples_leaf > 1:
        n_left = boundary + 1
        boundary = boundary[(n_left >= min_samples_leaf) & (m - n_left >= min_samples_leaf)]
    if boundary.size == 0:
        return None

    n_left = (boundary + 1).astype(np.float64)
    n_right = m - n_left
    c_left = cum[boundary]
    c_right = total - c_left
    if criterion == "gini":
        w_left = n_left - np.einsum("ij,ij->i", c_left, c_left) / n_left
        w_right = n_right - np.einsum("ij,ij->i", c_right, c_right) / n_right
        decrease = parent_impurity - (w_left + w_right) / m
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pl = c_left / n_left[:, None]
            pr = c_right / n_right[:, None]
            hl = -np.sum(np.where(pl > 0, pl * np.log(pl), 0.0), axis=1)
            hr = -np.sum(np.where(pr > 0, pr * np.log(pr), 0.0), axis=1)
        decrease = parent_impurity - (n_left * hl + n_right * hr) / m

    best = decrease.max()
    i = boundary[int(np.argmax(decrease >= best - GAIN_TOL))]
    return (v[i] + v[i + 1]) / 2.0, float(best)


def best_split(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    criterion: str = "gini",
    min_samples_leaf: int = 1,
    *,
    feature_subset: Optional[np.ndarray] = None,
    allow_zero_decrease: bool = False,
) -> Optional[SplitCandidate]:
    """Exhaustive axis-aligned split search over midpoint thresholds.

    Returns the candidate maximizing the impurity decrease, with ties broken
    by lowest feature index then lowest threshold. Returns None when no split
    strictly decreases impurity (unless allow_zero_decrease, used to keep
    splitting impure zero-gain nodes such as an exact XOR root).
    """
    m = features.shape[0]
    if m < 2:
        return None
    counts = np.bincount(labels, minlength=class_count).astype(np.float64)
    parent = _impurity(counts, criterion)
    onehot = np.zeros((m, class_count))
    onehot[np.arange(m), labels] = 1.0

    cols = range(features.shape[1]) if feature_subset is None else feature_subset
    best: Optional[SplitCandidate] = None
    for j in cols:
        found = _scan_feature(features[:, j], onehot, parent, criterion, min_samples_leaf)
        if found is None:
            continue
        threshold, decrease = found
        if best is None or decrease > best.impurity_decrease + GAIN_TOL:
            best = SplitCandidate(int(j), float(threshold), decrease)
    if best is None:
        return None
    if best.impurity_decrease <= GAIN_TOL and not allow_zero_decrease:
        return None
    return best


class _Counter:
    __slots__ = ("value",)

    def __init__(self):
        self.value = 0

    def next(self) -> int:
        v = self.value
        self.value += 1
        return v


def _grow(X, y, rows, depth, class_count, config, counter, rng) -> TreeNode:
    labels = y[rows]
    counts = np.bincount(labels, minlength=class_count)
    pure = counts.max() == rows.size
    if (
        pure
        or depth >= config.max_depth
        or rows.size < 2
        or rows.size < 2 * config.min_samples_leaf
    ):
        return Leaf(counter.next())

    subset = None
    if config.max_features is not None and config.max_features < X.shape[1]:
        subset = np.sort(rng.choice(X.shape[1], size=config.max_features, replace=False))
    # The node is impure here, so zero-gain candidates are still taken: an
    # exact-parity node (XOR) would otherwise never be separated.
    cand = best_split(
        X[rows],
        labels,
        class_count,
        config.split_criterion,
        config.min_samples_leaf,
        feature_subset=subset,
        allow_zero_decrease=True,
    )
    if cand is None:
        return Leaf(counter.next())

    go_left = X[rows, cand.feature_index] < cand.threshold
    left = _grow(X, y, rows[go_left], depth + 1, class_count, config, counter, rng)
    right = _grow(X, y, rows[~go_left], depth + 1, class_count, config, counter, rng)
    return Internal(cand.feature_index, cand.threshold, left, right)


@dataclass(frozen=True)
class Tree:
    """A grown tree: nested node structure plus flat arrays for batch routing."""

    root: TreeNode
    n_leaves: int
    n_features: int
    _flat: tuple = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_flat", _flatten(self.root))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id for each row of X. Routing rule: left iff x[f] < threshold."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected (n, {self.n_features}) inputs, got shape {X.shape}")
        feature, threshold, left, right, leaf_of = self._flat
        node = np.zeros(X.shape[0], dtype=np.int64)
        f = feature[node]
        active = f >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, feature[cur]] < threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
            f = feature[node]
            active = f >= 0
        return leaf_of[node]

    def apply_one(self, x: np.ndarray) -> int:
        return int(self.apply(np.asarray(x, dtype=np.float64)[None, :])[0])


def _flatten(root: TreeNode):
    feature, threshold, left, right, leaf_of = [], [], [], [], []

    def visit(node: TreeNode) -> int:
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_of.append(-1)
        if isinstance(node, Leaf):
            leaf_of[idx] = node.leaf_id
        else:
            feature[idx] = node.feature_index
            threshold[idx] = node.threshold
            left[idx] = visit(node.left)
            right[idx] = visit(node.right)
        return idx

    visit(root)
    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(leaf_of, dtype=np.int32),
    )


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    class_count: int,
    config: ForestConfig,
    seed: SeedStream | None = None,
) -> Tree:
    """Grow one tree on the given rows (no subsampling here).

    Deterministic unless max_features triggers per-node feature draws, in
    which case the seed supplies them.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = (seed or SeedStream(0)).rng()
    counter = _Counter()
    root = _grow(X, y, np.arange(X.shape[0]), 0, class_count, config, counter, rng)
    return Tree(root=root, n_leaves=counter.value, n_features=X.shape[1])


@dataclass(frozen=True)
class ForestRepresenter:
    """B honest trees plus each tree's out-of-bag row indices."""

    trees: tuple[Tree, ...]
    oob_indices: tuple[np.ndarray, ...]
    source_task_id: int
    n_features: int
    _stacked: tuple = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if len(self.trees) < 1:
            raise DataError("a representer needs at least one tree")
        if len(self.oob_indices) != len(self.trees):
            raise DataError("need one OOB index set per tree")
        if any(o.size == 0 for o in self.oob_indices):
            raise DataError("every tree must have a non-empty OOB set")
        # concatenate the per-tree node tables so a batch is routed through
        # all B trees with one indexing pass per depth level
        feature, threshold, left, right, leaf_of, roots = [], [], [], [], [], []
        offset = 0
        for tree in self.trees:
            f, t, l, r, lo = tree._flat
            roots.append(offset)
            feature.append(f)
            threshold.append(t)
            left.append(np.where(l >= 0, l + offset, -1))
            right.append(np.where(r >= 0, r + offset, -1))
            leaf_of.append(lo)
            offset += f.size
        object.__setattr__(
            self,
            "_stacked",
            (
                np.concatenate(feature),
                np.concatenate(threshold),
                np.concatenate(left).astype(np.int64),
                np.concatenate(right).astype(np.int64),
                np.concatenate(leaf_of),
                np.array(roots, dtype=np.int64),
            ),
        )

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def leaf_counts(self) -> list[int]:
        return [t.n_leaves for t in self.trees]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Leaf ids per tree: shape (B,) for a single input, (n, B) for a batch."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise DataError("inputs contain non-finite values")
        feature, threshold, left, right, leaf_of, roots = self._stacked
        n, b = X.shape[0], self.n_trees
        node = np.tile(roots, n)  # position i*b+j routes row i through tree j
        rows = np.repeat(np.arange(n), b)
        active = np.nonzero(feature[node] >= 0)[0]
        while active.size:
            cur = node[active]
            go_left = X[rows[active], feature[cur]] < threshold[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = active[feature[node[active]] >= 0]
        out = leaf_of[node].reshape(n, b).astype(np.int64)
        return out[0] if single else out


def fit_representer(
    data: TaskDataset, config: ForestConfig, seed: SeedStream
) -> ForestRepresenter:
    """Fit a forest representer: each tree grown on its own in-bag subsample.

    Out-of-bag indices are recorded per tree. Tree b owns the derived stream
    child("tree", b), so any fit schedule yields identical forests.
    """
    if data.n_samples < 2 * config.min_samples_leaf:
        raise DataError(
            f"need at least {2 * config.min_samples_leaf} samples, got {data.n_samples}"
        )
    trees = []
    oobs = []
    for b in range(config.n_estimators):
        s = seed.child("tree", b)
        in_bag, oob = subsample_indices(
            data.n_samples,
            config.max_samples,
            s.child("bag"),
            with_replacement=config.bootstrap_replace,
        )
        tree = grow_tree(
            data.features[in_bag],
            data.labels[in_bag],
            data.class_count,
            config,
            s.child("grow"),
        )
        trees.append(tree)
        oobs.append(oob)
    return ForestRepresenter(
        trees=tuple(trees),
        oob_indices=tuple(oobs),
        source_task_id=data.task_id,
        n_features=data.n_features,
    )

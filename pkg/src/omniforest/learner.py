"""The lifelong learner: one representer per task, a growing voter matrix,
and omni-voter prediction.

When task t arrives (build mode) the learner fits a new forest representer on
t's data, adds voters for t over every existing representer (its own via OOB
rows, the others via full data), and extends every earlier task's voter set
with a voter on the new representer using that task's retained data. Nothing
already fitted is ever mutated, so forgetting is structurally impossible.

Prediction for task t averages the posteriors of all of t's voters and takes
the argmax (lowest class index wins ties).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import DataError, TaskDataset
from .forest import ForestConfig, ForestRepresenter, fit_representer
from .seeding import SeedStream, as_seed_stream
from .voters import (
    KnnVoter,
    LeafVoter,
    _count_leaves,
    fit_cross_task_voter,
    fit_in_task_voter,
    fit_knn_voter,
    posterior_from_counts,
)

__all__ = [
    "StrategyConfig",
    "OmniLearner",
    "RecruitedTreesVoter",
    "HonestForestClassifier",
    "pool_datasets",
]


@dataclass(frozen=True)
class StrategyConfig:
    """How to provision trees for a newly arrived task."""

    mode: str = "build"  # build | recruit | hybrid
    trees_per_task: int = 10
    recruit_eval_fraction: float = 0.3
    hybrid_build_fraction: float = 0.5

    def __post_init__(self):
        if self.mode not in ("build", "recruit", "hybrid"):
            raise DataError(f"unknown strategy mode {self.mode!r}")
        if self.trees_per_task < 1:
            raise DataError("trees_per_task must be >= 1")
        for name in ("recruit_eval_fraction", "hybrid_build_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DataError(f"{name} must be in (0, 1)")


@dataclass(frozen=True)
class RecruitedTreesVoter:
    """Voter over trees recruited from existing representers for a new task.

    members are (representer_index, tree_index) pairs; each member tree has a
    leaf-posterior table fitted on the new task's data.
    """

    target_task_id: int
    class_count: int
    smoothing: float
    members: tuple[tuple[int, int], ...]
    counts: tuple[np.ndarray, ...]
    tables: tuple[np.ndarray, ...]

    def posterior_batch(self, leaf_mats: list[np.ndarray]) -> np.ndarray:
        acc = np.zeros((leaf_mats[0].shape[0], self.class_count))
        for (r, b), table in zip(self.members, self.tables):
            acc += table[leaf_mats[r][:, b]]
        return acc / len(self.members)


@dataclass(frozen=True)
class _VoterUnit:
    """One averaging unit of a task's omni-voter ensemble."""

    rep_index: int  # -1 for recruited-tree units
    voter: LeafVoter | KnnVoter | RecruitedTreesVoter

    def posterior_batch(self, leaf_mats: list[np.ndarray]) -> np.ndarray:
        if isinstance(self.voter, RecruitedTreesVoter):
            return self.voter.posterior_batch(leaf_mats)
        return self.voter.vote_batch(leaf_mats[self.rep_index])


class OmniLearner:
    """Task-aware lifelong classifier over honest forest representers."""

    def __init__(
        self,
        forest_config: ForestConfig | None = None,
        strategy: StrategyConfig | None = None,
        smoothing: float = 1.0,
        voter_kind: str = "leaf",
        forward_only: bool = False,
        seed: SeedStream | int = 0,
    ):
        if voter_kind not in ("leaf", "knn"):
            raise DataError(f"unknown voter kind {voter_kind!r}")
        self.forest_config = forest_config or ForestConfig()
        self.strategy = strategy or StrategyConfig()
        self.smoothing = smoothing
        self.voter_kind = voter_kind
        self.forward_only = forward_only
        self.root_seed = as_seed_stream(seed, SeedStream(0))
        self.representers: list[ForestRepresenter] = []
        self.task_ids: list[int] = []  # arrival order
        self.class_counts: dict[int, int] = {}
        self.retained_data: dict[int, TaskDataset] = {}
        self.task_units: dict[int, list[_VoterUnit]] = {}
        self.n_features: int | None = None

    # -- bookkeeping ------------------------------------------------------

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def n_trees_total(self) -> int:
        return sum(r.n_trees for r in self.representers)

    def voter_for(self, target_task_id: int, representer_task_id: int):
        """Voter matrix lookup by (target task, representer's source task)."""
        for unit in self.task_units[target_task_id]:
            if unit.rep_index >= 0:
                if self.representers[unit.rep_index].source_task_id == representer_task_id:
                    return unit.voter
        raise KeyError((target_task_id, representer_task_id))

    def copy(self) -> "OmniLearner":
        """Cheap snapshot: containers are copied, fitted objects are shared
        (they are immutable)."""
        dup = OmniLearner(
            forest_config=self.forest_config,
            strategy=self.strategy,
            smoothing=self.smoothing,
            voter_kind=self.voter_kind,
            forward_only=self.forward_only,
            seed=self.root_seed,
        )
        dup.representers = list(self.representers)
        dup.task_ids = list(self.task_ids)
        dup.class_counts = dict(self.class_counts)
        dup.retained_data = dict(self.retained_data)
        dup.task_units = {tid: list(units) for tid, units in self.task_units.items()}
        dup.n_features = self.n_features
        return dup

    def _check_new_task(self, data: TaskDataset) -> None:
        if data.task_id in self.class_counts:
            raise DataError(f"task {data.task_id} was already observed")
        if self.n_features is not None and data.n_features != self.n_features:
            raise DataError(
                f"task {data.task_id} has {data.n_features} features, expected {self.n_features}"
            )

    def _task_seed(self, seed) -> SeedStream:
        return as_seed_stream(seed, self.root_seed.child("task", self.n_tasks))

    def _fit_in_task(self, rep: ForestRepresenter, data: TaskDataset):
        if self.voter_kind == "knn":
            oob_union = np.unique(np.concatenate(rep.oob_indices))
            return fit_knn_voter(rep, data, rows=oob_union)
        return fit_in_task_voter(rep, data, smoothing=self.smoothing)

    def _fit_cross_task(self, rep: ForestRepresenter, data: TaskDataset):
        if self.voter_kind == "knn":
            return fit_knn_voter(rep, data)
        return fit_cross_task_voter(rep, data, smoothing=self.smoothing)

    # -- learning ---------------------------------------------------------

    def add_task(
        self,
        data: TaskDataset,
        config: ForestConfig | None = None,
        seed: SeedStream | int | None = None,
    ) -> "OmniLearner":
        """Observe a new task in build mode: new representer, new voter row,
        and a voter-matrix column update for every earlier task."""
        self._check_new_task(data)
        cfg = config or self.forest_config
        s = self._task_seed(seed)

        rep = fit_representer(data, cfg, s.child("representer"))
        new_index = len(self.representers)

        units = [
            _VoterUnit(r, self._fit_cross_task(old_rep, data))
            for r, old_rep in enumerate(self.representers)
        ]
        units.append(_VoterUnit(new_index, self._fit_in_task(rep, data)))

        backward = []
        if not self.forward_only:
            backward = [
                (tid, _VoterUnit(new_index, self._fit_cross_task(rep, self.retained_data[tid])))
                for tid in self.task_ids
            ]

        # all fits succeeded; commit
        self.representers.append(rep)
        self.task_units[data.task_id] = units
        for tid, unit in backward:
            self.task_units[tid].append(unit)
        self.task_ids.append(data.task_id)
        self.class_counts[data.task_id] = data.class_count
        if not self.forward_only:
            self.retained_data[data.task_id] = data
        self.n_features = data.n_features
        return self

    def add_task_recruiting(
        self,
        data: TaskDataset,
        seed: SeedStream | int | None = None,
    ) -> "OmniLearner":
        """Observe a new task by recruiting existing trees (and, in hybrid
        mode, building some new ones).

        Every existing tree is scored by the selection-set accuracy of a
        single-tree voter for the new task; the top scorers are recruited and
        their voters refitted on the full new-task data. Other tasks' voters
        are untouched by recruited trees.
        """
        from .data import split_train_test

        if self.strategy.mode not in ("recruit", "hybrid"):
            raise DataError(f"strategy mode {self.strategy.mode!r} does not recruit")
        if not self.representers:
            raise DataError("recruiting needs at least one existing representer")
        self._check_new_task(data)
        s = self._task_seed(seed)

        n_total = self.strategy.trees_per_task
        n_build = (
            int(round(self.strategy.hybrid_build_fraction * n_total))
            if self.strategy.mode == "hybrid"
            else 0
        )
        n_recruit = n_total - n_build
        if n_recruit > self.n_trees_total:
            raise DataError(
                f"cannot recruit {n_recruit} trees from {self.n_trees_total} existing ones"
            )

        units: list[_VoterUnit] = []
        recruited = None
        if n_recruit > 0:
            sel_train, sel_eval = split_train_test(
                data, self.strategy.recruit_eval_fraction, s.child("selection")
            )
            ranked = self._rank_trees(sel_train, sel_eval)
            members = tuple((r, b) for _, r, b in ranked[:n_recruit])
            counts, tables = self._member_tables(members, data)
            recruited = RecruitedTreesVoter(
                target_task_id=data.task_id,
                class_count=data.class_count,
                smoothing=self.smoothing,
                members=members,
                counts=counts,
                tables=tables,
            )
            units.append(_VoterUnit(-1, recruited))

        built = None
        backward = []
        if n_build > 0:
            cfg = replace(self.forest_config, n_estimators=n_build)
            built = fit_representer(data, cfg, s.child("representer"))
            new_index = len(self.representers)
            units.append(_VoterUnit(new_index, self._fit_in_task(built, data)))
            if not self.forward_only:
                backward = [
                    (
                        tid,
                        _VoterUnit(
                            new_index, self._fit_cross_task(built, self.retained_data[tid])
                        ),
                    )
                    for tid in self.task_ids
                ]

        if built is not None:
            self.representers.append(built)
        self.task_units[data.task_id] = units
        for tid, unit in backward:
            self.task_units[tid].append(unit)
        self.task_ids.append(data.task_id)
        self.class_counts[data.task_id] = data.class_count
        if not self.forward_only:
            self.retained_data[data.task_id] = data
        self.n_features = data.n_features
        return self

    def observe(self, data: TaskDataset, seed: SeedStream | int | None = None) -> "OmniLearner":
        """Dispatch on strategy mode; the first task is always built."""
        if self.strategy.mode == "build" or not self.representers:
            return self.add_task(data, seed=seed)
        return self.add_task_recruiting(data, seed=seed)

    def _rank_trees(self, sel_train: TaskDataset, sel_eval: TaskDataset):
        """Score every existing tree on the new task; higher accuracy first,
        ties by (representer index, tree index)."""
        k = sel_train.class_count
        ranked = []
        for r, rep in enumerate(self.representers):
            train_leaves = rep.transform(sel_train.features)
            eval_leaves = rep.transform(sel_eval.features)
            for b, tree in enumerate(rep.trees):
                c = _count_leaves(train_leaves[:, b], sel_train.labels, tree.n_leaves, k)
                table = posterior_from_counts(c, self.smoothing)
                pred = np.argmax(table[eval_leaves[:, b]], axis=1)
                acc = float(np.mean(pred == sel_eval.labels))
                ranked.append((acc, r, b))
        ranked.sort(key=lambda t: (-t[0], t[1], t[2]))
        return ranked

    def _member_tables(self, members, data: TaskDataset):
        counts = []
        tables = []
        for r, b in members:
            tree = self.representers[r].trees[b]
            leaves = tree.apply(data.features)
            c = _count_leaves(leaves, data.labels, tree.n_leaves, data.class_count)
            counts.append(c)
            tables.append(posterior_from_counts(c, self.smoothing))
        return tuple(counts), tuple(tables)

    # -- inference --------------------------------------------------------

    def _leaf_mats(self, X: np.ndarray) -> list[np.ndarray]:
        return [rep.transform(X) for rep in self.representers]

    def predict_proba_batch(self, task_id: int, X: np.ndarray) -> np.ndarray:
        if task_id not in self.task_units:
            raise DataError(f"unknown task {task_id}")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("expected a 2-D batch of inputs")
        leaf_mats = self._leaf_mats(X)
        units = self.task_units[task_id]
        acc = np.zeros((X.shape[0], self.class_counts[task_id]))
        for unit in units:
            acc += unit.posterior_batch(leaf_mats)
        return acc / len(units)

    def predict_proba(self, task_id: int, x: np.ndarray) -> np.ndarray:
        return self.predict_proba_batch(task_id, np.asarray(x, dtype=np.float64)[None, :])[0]

    def predict_batch(self, task_id: int, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(task_id, X), axis=1)

    def predict(self, task_id: int, x: np.ndarray) -> int:
        """Averaged-posterior argmax; ties resolve to the lowest class index."""
        return int(np.argmax(self.predict_proba(task_id, x)))

    def error(self, test: TaskDataset) -> float:
        """0-1 error of task-aware predictions on a held-out set."""
        pred = self.predict_batch(test.task_id, test.features)
        return float(np.mean(pred != test.labels))


class HonestForestClassifier:
    """Single-task honest forest: a representer plus its OOB voter.

    This is both the single-task specialization of the lifelong learner and
    the task-blind baseline when fitted on pooled data.
    """

    def __init__(
        self,
        config: ForestConfig | None = None,
        smoothing: float = 1.0,
        seed: SeedStream | int = 0,
    ):
        self.config = config or ForestConfig()
        self.smoothing = smoothing
        self.root_seed = as_seed_stream(seed, SeedStream(0))
        self.representer: ForestRepresenter | None = None
        self.voter: LeafVoter | None = None

    def fit(self, data: TaskDataset) -> "HonestForestClassifier":
        self.representer = fit_representer(data, self.config, self.root_seed.child("representer"))
        self.voter = fit_in_task_voter(self.representer, data, smoothing=self.smoothing)
        return self

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        if self.representer is None:
            raise DataError("classifier is not fitted")
        return self.voter.vote_batch(self.representer.transform(np.asarray(X, dtype=np.float64)))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(X), axis=1)

    def predict(self, x: np.ndarray) -> int:
        return int(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def error(self, test: TaskDataset) -> float:
        return float(np.mean(self.predict_batch(test.features) != test.labels))


def pool_datasets(datasets: list[TaskDataset], task_id: int | None = None) -> TaskDataset:
    """Concatenate tasks into one task-blind dataset (labels kept as-is)."""
    if not datasets:
        raise DataError("nothing to pool")
    feats = np.concatenate([d.features for d in datasets])
    labels = np.concatenate([d.labels for d in datasets])
    return TaskDataset(
        features=feats,
        labels=labels,
        task_id=datasets[0].task_id if task_id is None else task_id,
        class_count=max(d.class_count for d in datasets),
    )

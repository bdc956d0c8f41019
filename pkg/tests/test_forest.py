import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omniforest.data import DataError, TaskDataset
from omniforest.forest import (
    ForestConfig,
    Internal,
    Leaf,
    best_split,
    fit_representer,
    grow_tree,
)
from omniforest.seeding import SeedStream
from omniforest.voters import fit_cross_task_voter


def route_oracle(node, x):
    """Independent recursive descent: left iff x[f] < threshold."""
    while isinstance(node, Internal):
        node = node.left if x[node.feature_index] < node.threshold else node.right
    return node.leaf_id


def tree_depth(node):
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def collect_leaf_ids(node):
    if isinstance(node, Leaf):
        return [node.leaf_id]
    return collect_leaf_ids(node.left) + collect_leaf_ids(node.right)


class TestBestSplit:
    def test_single_gap_midpoint(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        cand = best_split(X, y, 2)
        assert cand.feature_index == 0
        assert cand.threshold == 0.5
        assert cand.impurity_decrease == pytest.approx(0.5)

    def test_xor_zero_gain_by_hand(self):
        # parent gini = 0.5; every single axis split leaves two (1,1) children,
        # each gini 0.5, so the weighted decrease is exactly 0
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        assert best_split(X, y, 2) is None
        cand = best_split(X, y, 2, allow_zero_decrease=True)
        assert cand is not None
        # ties break to the lowest feature then lowest threshold
        assert cand.feature_index == 0
        assert cand.threshold == 0.5
        assert abs(cand.impurity_decrease) <= 1e-12

    def test_all_identical_rows(self):
        X = np.zeros((5, 3))
        y = np.array([0, 1, 0, 1, 0])
        assert best_split(X, y, 2) is None
        assert best_split(X, y, 2, allow_zero_decrease=True) is None

    def test_pure_node_no_strict_split(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([1, 1, 1])
        assert best_split(X, y, 2) is None

    def test_min_samples_leaf_restricts_candidates(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 1, 1, 1])
        cand = best_split(X, y, 2, min_samples_leaf=2)
        # only the middle boundary is allowed; threshold 1.5
        assert cand.threshold == 1.5

    def test_brute_force_oracle_agreement(self):
        # exhaustive re-scan of every (feature, midpoint) pair by hand
        rng = np.random.default_rng(5)
        for trial in range(20):
            X = rng.normal(size=(25, 3)).round(1)  # rounding forces ties
            y = rng.integers(0, 3, size=25)

            def gini(labels):
                if labels.size == 0:
                    return 0.0
                _, counts = np.unique(labels, return_counts=True)
                p = counts / labels.size
                return 1.0 - np.sum(p**2)

            parent = gini(y)
            best_val = None
            for f in range(3):
                vals = np.unique(X[:, f])
                for lo, hi in zip(vals[:-1], vals[1:]):
                    thr = (lo + hi) / 2
                    mask = X[:, f] < thr
                    dec = parent - (
                        mask.sum() * gini(y[mask]) + (~mask).sum() * gini(y[~mask])
                    ) / y.size
                    if best_val is None or dec > best_val + 1e-12:
                        best_val = dec
            cand = best_split(X, y, 3)
            if cand is None:
                assert best_val <= 1e-12
            else:
                assert cand.impurity_decrease == pytest.approx(best_val, abs=1e-9)


class TestGrowTree:
    def test_xor_fallback_split_separates_perfectly(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        tree = grow_tree(X, y, 2, ForestConfig(max_depth=5))
        assert tree.n_leaves == 4
        leaves = tree.apply(X)
        # every point isolated, so a full-data voter classifies all correctly
        assert len(set(zip(leaves, y))) == 4

    def test_two_point_separable_depth_one(self):
        # hand oracle: the only candidate threshold is 0.5
        X = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        tree = grow_tree(X, y, 2, ForestConfig(max_depth=1))
        assert tree.n_leaves == 2
        assert isinstance(tree.root, Internal) and tree.root.threshold == 0.5
        assert tree.apply(X)[0] != tree.apply(X)[1]

    def test_max_depth_respected(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 2))
        y = rng.integers(0, 2, 200)
        for depth in (1, 2, 4):
            tree = grow_tree(X, y, 2, ForestConfig(max_depth=depth))
            assert tree_depth(tree.root) <= depth

    def test_leaf_ids_are_dense(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(80, 3))
        y = rng.integers(0, 2, 80)
        tree = grow_tree(X, y, 2, ForestConfig())
        assert sorted(collect_leaf_ids(tree.root)) == list(range(tree.n_leaves))


class TestTransform:
    def test_single_leaf_tree(self):
        X = np.zeros((4, 2))
        y = np.zeros(4, dtype=int)
        tree = grow_tree(X, y, 2, ForestConfig())
        assert tree.n_leaves == 1
        assert np.array_equal(tree.apply(np.random.default_rng(0).normal(size=(7, 2))), np.zeros(7))

    def test_boundary_goes_right(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        tree = grow_tree(X, y, 2, ForestConfig())
        left_leaf = tree.apply(np.array([[0.0]]))[0]
        right_leaf = tree.apply(np.array([[1.0]]))[0]
        on_boundary = tree.apply(np.array([[0.5]]))[0]
        assert on_boundary == right_leaf != left_leaf

    @given(st.integers(min_value=0, max_value=10_000))
    def test_matches_recursive_descent_oracle(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 2))
        y = rng.integers(0, 2, 60)
        data = TaskDataset(X, y, 0, 2)
        rep = fit_representer(data, ForestConfig(n_estimators=5, max_depth=6), SeedStream(seed))
        queries = rng.normal(size=(20, 2))
        got = rep.transform(queries)
        assert got.shape == (20, 5)
        for b, tree in enumerate(rep.trees):
            for i, q in enumerate(queries):
                assert got[i, b] == route_oracle(tree.root, q)
                assert 0 <= got[i, b] < tree.n_leaves

    def test_dimension_mismatch(self):
        data = TaskDataset(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10, int), 0, 2)
        rep = fit_representer(data, ForestConfig(n_estimators=2), SeedStream(0))
        with pytest.raises(DataError):
            rep.transform(np.zeros((3, 5)))


class TestFitRepresenter:
    def test_paper_scale_oob_sizes(self):
        rng = np.random.default_rng(2)
        data = TaskDataset(rng.normal(size=(500, 2)), rng.integers(0, 2, 500), 0, 2)
        rep = fit_representer(data, ForestConfig(), SeedStream(11))
        assert rep.n_trees == 10
        assert all(o.size == 165 for o in rep.oob_indices)

    def test_pure_data_single_leaf_trees(self):
        rng = np.random.default_rng(3)
        data = TaskDataset(rng.normal(size=(40, 2)), np.zeros(40, int), 0, 2)
        rep = fit_representer(data, ForestConfig(n_estimators=4), SeedStream(0))
        assert all(t.n_leaves == 1 for t in rep.trees)

    def test_degenerate_identical_rows_not_an_error(self):
        data = TaskDataset(np.ones((30, 2)), np.tile([0, 1], 15), 0, 2)
        rep = fit_representer(data, ForestConfig(n_estimators=3), SeedStream(0))
        assert all(t.n_leaves == 1 for t in rep.trees)

    def test_representation_is_b_sparse(self):
        rng = np.random.default_rng(4)
        data = TaskDataset(rng.normal(size=(100, 2)), rng.integers(0, 2, 100), 0, 2)
        rep = fit_representer(data, ForestConfig(n_estimators=6), SeedStream(1))
        leafmat = rep.transform(rng.normal(size=(1000, 2)))
        assert leafmat.shape == (1000, 6)
        for b, tree in enumerate(rep.trees):
            assert leafmat[:, b].min() >= 0
            assert leafmat[:, b].max() < tree.n_leaves

    def test_determinism_same_seed(self):
        rng = np.random.default_rng(5)
        data = TaskDataset(rng.normal(size=(60, 2)), rng.integers(0, 2, 60), 0, 2)
        a = fit_representer(data, ForestConfig(n_estimators=3), SeedStream(7))
        b = fit_representer(data, ForestConfig(n_estimators=3), SeedStream(7))
        assert all(x.root == y.root for x, y in zip(a.trees, b.trees))
        assert all(np.array_equal(x, y) for x, y in zip(a.oob_indices, b.oob_indices))

    def test_honesty_oob_labels_never_shape_structure(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(80, 2))
        y = rng.integers(0, 2, 80)
        data = TaskDataset(X, y, 0, 2)
        cfg = ForestConfig(n_estimators=1, max_samples=0.6)
        rep = fit_representer(data, cfg, SeedStream(3))
        mutated = y.copy()
        mutated[rep.oob_indices[0]] = 1 - mutated[rep.oob_indices[0]]
        rep2 = fit_representer(TaskDataset(X, mutated, 0, 2), cfg, SeedStream(3))
        assert rep.trees[0].root == rep2.trees[0].root

    def test_monotone_capacity_majority(self):
        # leaf count should (statistically) grow with n on nested samples
        cfg = ForestConfig(n_estimators=3)
        wins = trials = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(400, 2))
            y = (X[:, 0] * X[:, 1] > 0).astype(int) ^ (rng.random(400) < 0.1).astype(int)
            counts = []
            for n in (100, 200, 400):
                data = TaskDataset(X[:n], y[:n], 0, 2)
                rep = fit_representer(data, cfg, SeedStream(seed))
                counts.append(sum(rep.leaf_counts))
            for a, b in zip(counts[:-1], counts[1:]):
                trials += 1
                wins += b >= a
        assert wins / trials > 0.5

    def test_cross_voter_on_two_point_tree_classifies_training_points(self):
        # companion check for the depth-1 separable example: the tree's own
        # (full-data) voter gets both points right
        X = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        data = TaskDataset(X, y, 1, 2)
        tree = grow_tree(X, y, 2, ForestConfig(max_depth=1))
        from omniforest.forest import ForestRepresenter

        rep = ForestRepresenter(
            trees=(tree,), oob_indices=(np.array([0]),), source_task_id=0, n_features=1
        )
        voter = fit_cross_task_voter(rep, data, smoothing=0.0)
        posts = voter.vote_batch(rep.transform(X))
        assert np.argmax(posts[0]) == 0 and np.argmax(posts[1]) == 1

    def test_requires_enough_samples(self):
        data = TaskDataset(np.ones((3, 1)), np.array([0, 1, 0]), 0, 2)
        with pytest.raises(DataError):
            fit_representer(data, ForestConfig(min_samples_leaf=2), SeedStream(0))

    def test_entropy_criterion_learns(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(200, 2))
        y = (X[:, 0] > 0).astype(int)
        data = TaskDataset(X, y, 0, 2)
        rep = fit_representer(
            data, ForestConfig(n_estimators=3, split_criterion="entropy"), SeedStream(2)
        )
        from omniforest.voters import fit_in_task_voter

        voter = fit_in_task_voter(rep, data, smoothing=0.0)
        test_x = rng.normal(size=(300, 2))
        pred = np.argmax(voter.vote_batch(rep.transform(test_x)), axis=1)
        assert np.mean(pred == (test_x[:, 0] > 0)) > 0.9

    def test_max_features_subsampling(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(150, 6))
        y = (X[:, 3] > 0).astype(int)
        data = TaskDataset(X, y, 0, 2)
        rep = fit_representer(
            data, ForestConfig(n_estimators=4, max_features=2, max_depth=4), SeedStream(3)
        )
        # per-node feature draws come from the tree's own stream: refit identical
        rep2 = fit_representer(
            data, ForestConfig(n_estimators=4, max_features=2, max_depth=4), SeedStream(3)
        )
        assert all(a.root == b.root for a, b in zip(rep.trees, rep2.trees))

        def used_features(node, acc):
            if isinstance(node, Internal):
                acc.add(node.feature_index)
                used_features(node.left, acc)
                used_features(node.right, acc)
            return acc

        used = set()
        for t in rep.trees:
            used_features(t.root, used)
        assert used <= set(range(6))

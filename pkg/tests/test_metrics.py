import math

import numpy as np
import pytest

from omniforest.data import DataError, TaskDataset
from omniforest.environments import XorSpec, generate_xor
from omniforest.learner import HonestForestClassifier, OmniLearner
from omniforest.metrics import (
    ALL_DATA,
    SINGLE_TASK,
    UP_TO_TASK,
    ErrorEstimate,
    backward_transfer,
    build_transfer,
    estimate_error,
    factorization_check,
    forward_transfer,
    spearman_correlation,
    transfer_efficiency,
    TransferReport,
)
from omniforest.seeding import SeedStream


class _ConstantLearner:
    """Always predicts class 0."""

    def error(self, test):
        return float(np.mean(test.labels != 0))


class _MemorizingLearner:
    def __init__(self, datasets):
        self.bank = {}
        for d in datasets:
            for x, y in zip(d.features, d.labels):
                self.bank[tuple(x)] = y

    def error(self, test):
        preds = np.array([self.bank.get(tuple(x), -1) for x in test.features])
        return float(np.mean(preds != test.labels))


def balanced_test(n=100, task_id=0):
    rng = np.random.default_rng(0)
    labels = np.tile([0, 1], n // 2)
    return TaskDataset(rng.normal(size=(n, 2)), labels, task_id, 2)


class TestEstimateError:
    def test_constant_learner_half_error(self):
        test = balanced_test(200)
        est = estimate_error(
            lambda datasets, seed: _ConstantLearner(),
            lambda seed: [balanced_test(50)],
            test,
            repetitions=3,
            seed=SeedStream(1),
            condition=SINGLE_TASK,
        )
        assert est.mean == 0.5
        assert est.errors == (0.5, 0.5, 0.5)

    def test_memorizing_learner_zero_on_train(self):
        train = balanced_test(60)
        est = estimate_error(
            lambda datasets, seed: _MemorizingLearner(datasets),
            lambda seed: [train],
            train,
            repetitions=2,
            seed=SeedStream(2),
        )
        assert est.mean == 0.0

    def test_single_task_learner_close_to_standalone_forest(self):
        test = generate_xor(XorSpec(1500, seed=SeedStream(50)))

        def provider(seed):
            return [generate_xor(XorSpec(750, seed=seed, task_id=0))]

        def odif_factory(datasets, seed):
            learner = OmniLearner(seed=seed)
            for d in datasets:
                learner.add_task(d)
            return learner

        def forest_factory(datasets, seed):
            return HonestForestClassifier(seed=seed).fit(datasets[0])

        a = estimate_error(odif_factory, provider, test, 3, SeedStream(3))
        b = estimate_error(forest_factory, provider, test, 3, SeedStream(4))
        assert abs(a.mean - b.mean) <= 0.05

    def test_validation(self):
        test = balanced_test(10)
        with pytest.raises(DataError):
            estimate_error(lambda d, s: _ConstantLearner(), lambda s: [], test, 0, SeedStream(0))
        with pytest.raises(DataError):
            estimate_error(lambda d, s: _ConstantLearner(), lambda s: [], test, 1, SeedStream(0))


def est(condition, mean, task=0, reps=4, n=100):
    return ErrorEstimate(task, condition, tuple([mean] * reps), n)


class TestRatios:
    def test_equal_means_give_one(self):
        r = transfer_efficiency(est(SINGLE_TASK, 0.3), est(ALL_DATA, 0.3))
        assert r.value == 1.0

    def test_ratio_arithmetic(self):
        r = transfer_efficiency(est(SINGLE_TASK, 0.2), est(ALL_DATA, 0.1))
        assert r.value == pytest.approx(2.0)

    def test_zero_denominator_flagged(self):
        r = transfer_efficiency(est(SINGLE_TASK, 0.2), est(ALL_DATA, 0.0))
        assert not r.defined
        assert r.reason == "zero denominator"
        assert r.log is None

    def test_zero_numerator_has_undefined_log(self):
        r = transfer_efficiency(est(SINGLE_TASK, 0.0), est(ALL_DATA, 0.2))
        assert r.value == 0.0
        assert r.log is None

    def test_condition_mismatch_rejected(self):
        with pytest.raises(DataError):
            forward_transfer(est(SINGLE_TASK, 0.2), est(ALL_DATA, 0.1))
        with pytest.raises(DataError):
            backward_transfer(est(UP_TO_TASK, 0.2), est(ALL_DATA, 0.1, task=1))


class TestFactorization:
    def test_hand_values(self):
        t = build_transfer(
            est(SINGLE_TASK, 0.2), est(UP_TO_TASK, 0.15), est(ALL_DATA, 0.1)
        )
        assert t.te.value == pytest.approx(2.0)
        assert t.fte.value == pytest.approx(4.0 / 3.0)
        assert t.bte.value == pytest.approx(1.5)
        report = TransferReport(tasks=(t,))
        assert factorization_check(report)[0] <= 1e-12

    def test_degenerate_single_task(self):
        t = build_transfer(est(SINGLE_TASK, 0.25), est(UP_TO_TASK, 0.25), est(ALL_DATA, 0.25))
        assert t.te.value == 1.0 and t.fte.value == 1.0 and t.bte.value == 1.0

    def test_identity_on_random_estimates(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            s, u, a = rng.uniform(0.01, 0.99, size=3)
            t = build_transfer(est(SINGLE_TASK, s), est(UP_TO_TASK, u), est(ALL_DATA, a))
            assert abs(t.te.value - t.fte.value * t.bte.value) <= 1e-12

    def test_undefined_ratio_residual_is_none(self):
        t = build_transfer(est(SINGLE_TASK, 0.2), est(UP_TO_TASK, 0.0), est(ALL_DATA, 0.0))
        report = TransferReport(tasks=(t,))
        assert factorization_check(report)[0] is None

    def test_first_task_fte_is_exactly_one(self):
        # single-task and up-to-task share the same estimates for task 1
        shared = est(SINGLE_TASK, 0.173)
        up = ErrorEstimate(0, UP_TO_TASK, shared.errors, shared.n_train)
        t = build_transfer(shared, up, est(ALL_DATA, 0.15))
        assert t.fte.value == 1.0


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman_correlation([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman_correlation([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_value(self):
        # ranks x: 1,2,3,4,5; ranks y: 2,1,4,3,5 -> rho = 1 - 6*4/(5*24) = 0.8
        rho = spearman_correlation([1, 2, 3, 4, 5], [20, 10, 40, 30, 50])
        assert rho == pytest.approx(0.8)

    def test_ties_use_average_ranks(self):
        rho = spearman_correlation([1, 2, 2, 3], [1, 2, 2, 3])
        assert rho == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(DataError):
            spearman_correlation([1], [2])
        with pytest.raises(DataError):
            spearman_correlation([1, 1, 1], [1, 2, 3])


class TestErrorEstimateValidation:
    def test_bounds(self):
        with pytest.raises(DataError):
            ErrorEstimate(0, SINGLE_TASK, (1.2,), 10)
        with pytest.raises(DataError):
            ErrorEstimate(0, "bogus", (0.1,), 10)
        with pytest.raises(DataError):
            ErrorEstimate(0, SINGLE_TASK, (), 10)

    def test_log_is_natural(self):
        r = transfer_efficiency(est(SINGLE_TASK, 0.2), est(ALL_DATA, 0.1))
        assert r.log == pytest.approx(math.log(2.0))

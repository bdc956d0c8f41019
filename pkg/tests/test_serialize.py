import numpy as np
import pytest

from omniforest.environments import SpiralSpec, XorSpec, generate_spirals, generate_xor
from omniforest.forest import ForestConfig
from omniforest.learner import OmniLearner, StrategyConfig
from omniforest.seeding import SeedStream
from omniforest.serialize import (
    FORMAT_VERSION,
    MAGIC,
    SerializationError,
    learner_from_bytes,
    learner_to_bytes,
    load_model,
    representer_to_bytes,
    save_model,
    voter_to_bytes,
)


def trained_learner(seed=3, knn=False, recruit=False):
    learner = OmniLearner(
        ForestConfig(n_estimators=3),
        strategy=StrategyConfig(mode="recruit" if recruit else "build", trees_per_task=2),
        voter_kind="knn" if knn else "leaf",
        seed=seed,
    )
    learner.add_task(generate_xor(XorSpec(80, seed=SeedStream(1), task_id=0)))
    learner.add_task(
        generate_spirals(SpiralSpec(80, 3, 2.5, 3.0, SeedStream(2), task_id=1))
    )
    if recruit:
        learner.add_task_recruiting(
            generate_xor(XorSpec(80, seed=SeedStream(5), angle_degrees=90.0, task_id=2))
        )
    return learner


class TestRoundTrip:
    def test_identical_predictions_on_1000_inputs(self, tmp_path):
        learner = trained_learner()
        path = str(tmp_path / "model.bin")
        save_model(learner, path)
        loaded = load_model(path)
        X = np.random.default_rng(0).normal(size=(1000, 2))
        for t in (0, 1):
            assert np.array_equal(
                learner.predict_proba_batch(t, X), loaded.predict_proba_batch(t, X)
            )
            assert np.array_equal(learner.predict_batch(t, X), loaded.predict_batch(t, X))

    def test_retained_data_round_trips_exactly(self):
        learner = trained_learner()
        loaded = learner_from_bytes(learner_to_bytes(learner))
        for tid, d in learner.retained_data.items():
            assert np.array_equal(d.features, loaded.retained_data[tid].features)
            assert np.array_equal(d.labels, loaded.retained_data[tid].labels)

    def test_loaded_learner_can_continue_learning(self):
        learner = trained_learner()
        loaded = learner_from_bytes(learner_to_bytes(learner))
        extra = generate_xor(XorSpec(60, seed=SeedStream(9), angle_degrees=45.0, task_id=7))
        learner.add_task(extra)
        loaded.add_task(extra)
        X = np.random.default_rng(1).normal(size=(50, 2))
        assert np.array_equal(learner.predict_batch(0, X), loaded.predict_batch(0, X))

    def test_without_retained_data(self):
        learner = trained_learner()
        loaded = learner_from_bytes(learner_to_bytes(learner, include_data=False))
        assert loaded.retained_data == {}
        X = np.random.default_rng(2).normal(size=(20, 2))
        assert np.array_equal(learner.predict_batch(1, X), loaded.predict_batch(1, X))

    def test_knn_voters_round_trip(self):
        learner = trained_learner(knn=True)
        loaded = learner_from_bytes(learner_to_bytes(learner))
        X = np.random.default_rng(3).normal(size=(40, 2))
        for t in (0, 1):
            assert np.array_equal(
                learner.predict_proba_batch(t, X), loaded.predict_proba_batch(t, X)
            )

    def test_recruited_voters_round_trip(self):
        learner = trained_learner(recruit=True)
        loaded = learner_from_bytes(learner_to_bytes(learner))
        X = np.random.default_rng(4).normal(size=(40, 2))
        for t in (0, 1, 2):
            assert np.array_equal(
                learner.predict_proba_batch(t, X), loaded.predict_proba_batch(t, X)
            )


class TestDeterminism:
    def test_serialization_is_deterministic(self):
        learner = trained_learner()
        assert learner_to_bytes(learner) == learner_to_bytes(learner)

    def test_copy_serializes_identically(self):
        learner = trained_learner()
        assert learner_to_bytes(learner.copy()) == learner_to_bytes(learner)

    def test_component_bytes_stable(self):
        learner = trained_learner()
        rep = learner.representers[0]
        voter = learner.voter_for(0, 0)
        assert representer_to_bytes(rep) == representer_to_bytes(rep)
        assert voter_to_bytes(voter) == voter_to_bytes(voter)


class TestCorruption:
    def test_truncated_file_rejected(self, tmp_path):
        learner = trained_learner()
        blob = learner_to_bytes(learner)
        path = tmp_path / "model.bin"
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(SerializationError, match="truncated|checksum"):
            load_model(str(path))

    def test_flipped_byte_rejected(self):
        blob = bytearray(learner_to_bytes(trained_learner()))
        blob[len(blob) // 2] ^= 0xFF
        with pytest.raises(SerializationError, match="checksum"):
            learner_from_bytes(bytes(blob))

    def test_unknown_version_rejected(self):
        blob = bytearray(learner_to_bytes(trained_learner()))
        off = len(MAGIC)
        blob[off : off + 4] = (FORMAT_VERSION + 1).to_bytes(4, "little")
        with pytest.raises(SerializationError, match="version"):
            learner_from_bytes(bytes(blob))

    def test_bad_magic_rejected(self):
        with pytest.raises(SerializationError, match="magic|short"):
            learner_from_bytes(b"NOTAMODELFILE" + b"\x00" * 64)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omniforest.seeding import SeedStream, as_seed_stream


def test_same_path_same_draws():
    a = SeedStream(42).child("tree", 3).child("bag")
    b = SeedStream(42).child("tree", 3).child("bag")
    assert np.array_equal(a.rng().random(16), b.rng().random(16))


def test_rng_is_fresh_each_call():
    s = SeedStream(1).child("x")
    assert np.array_equal(s.rng().random(8), s.rng().random(8))


def test_distinct_paths_differ():
    root = SeedStream(7)
    draws = {
        name: tuple(stream.rng().random(4))
        for name, stream in [
            ("root", root),
            ("a0", root.child("a", 0)),
            ("a1", root.child("a", 1)),
            ("b0", root.child("b", 0)),
            ("a0a", root.child("a", 0).child("a")),
        ]
    }
    assert len(set(draws.values())) == len(draws)


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=0, max_value=1000))
def test_derivation_is_pure(root, idx):
    s = SeedStream(root)
    assert s.child("rep", idx).entropy == s.child("rep", idx).entropy


def test_rejects_bad_roots():
    with pytest.raises(ValueError):
        SeedStream(-1)
    with pytest.raises(ValueError):
        SeedStream(2**64)
    with pytest.raises(ValueError):
        SeedStream(3).child("x", -1)


def test_as_seed_stream_coercion():
    fallback = SeedStream(9)
    assert as_seed_stream(None, fallback) is fallback
    assert as_seed_stream(5, fallback).entropy == SeedStream(5).entropy
    s = SeedStream(1).child("q")
    assert as_seed_stream(s, fallback) is s

import numpy as np
import pytest

from infserv.streams import SEED_DERIVATION_VERSION, Role, Stream, generator


def test_same_path_same_draws():
    a, b = Stream(5, 0, Role.ARRIVALS, 3), Stream(5, 0, Role.ARRIVALS, 3)
    assert [a.exponential() for _ in range(600)] == [b.exponential() for _ in range(600)]


def test_derivation_is_documented_seedsequence_philox():
    ss = np.random.SeedSequence(entropy=11, spawn_key=(0, 1, 4))
    ref = np.random.Generator(np.random.Philox(ss)).standard_exponential(256)
    s = Stream(11, 0, 1, 4)
    assert [s.exponential() for _ in range(256)] == ref.tolist()
    assert SEED_DERIVATION_VERSION == "philox4x64-seedsequence-v1"


def test_distinct_paths_do_not_collide():
    # a million draws from disjoint replica ranges share no value
    first = np.concatenate([generator(9, 0, Role.ARRIVALS, r).random(5000) for r in range(100)])
    second = np.concatenate([generator(9, 0, Role.ARRIVALS, r).random(5000) for r in range(100, 200)])
    assert first.size + second.size == 10**6
    assert np.intersect1d(first, second).size == 0
    assert np.unique(first).size == first.size


def test_integer_range():
    s = Stream(1, 2)
    vals = [s.integer(3) for _ in range(3000)]
    assert set(vals) == {1, 2, 3}
    assert abs(vals.count(1) / 3000 - 1 / 3) < 0.04


def test_blocks_are_drawn_in_request_order():
    # each type refills a block of 256 from the shared generator when exhausted
    s = Stream(3, 1)
    g = generator(3, 1)
    e0 = s.exponential()
    u0 = s.uniform()
    assert e0 == g.standard_exponential(256)[0]
    assert u0 == g.random(256)[0]


def test_seed_range():
    with pytest.raises(ValueError):
        generator(-1)
    with pytest.raises(ValueError):
        generator(2**64)

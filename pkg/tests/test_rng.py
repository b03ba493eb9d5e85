import numpy as np
import pytest

from affinity_lb.rng import CounterRNG, derive_key, next_index, next_uniform, new_stream


def test_same_seed_same_stream():
    a, b = CounterRNG(5, "x"), CounterRNG(5, "x")
    assert [a.uniform() for _ in range(50)] == [b.uniform() for _ in range(50)]


def test_paths_give_independent_keys():
    keys = {derive_key(1, "a"), derive_key(1, "b"), derive_key(2, "a"), derive_key(1, "a", 0)}
    assert len(keys) == 4


def test_uniform_range_and_mean():
    st = new_stream(derive_key(0))
    xs = np.array([next_uniform(st) for _ in range(20000)])
    assert xs.min() >= 0 and xs.max() < 1
    assert abs(xs.mean() - 0.5) < 5 * np.sqrt(1 / 12 / xs.size)


def test_next_index_covers_range_uniformly():
    st = new_stream(derive_key(3))
    counts = np.bincount([next_index(st, 7) for _ in range(70000)], minlength=7)
    assert counts.size == 7
    expected = 10000
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 22.5  # 99.9% quantile, 6 dof


def test_spawn_differs_from_parent():
    r = CounterRNG(9)
    child = r.spawn("child")
    assert r.uniform() != child.uniform()


def test_numpy_generator_is_deterministic():
    a = CounterRNG(4, "np").numpy().random(5)
    b = CounterRNG(4, "np").numpy().random(5)
    assert np.array_equal(a, b)


def test_integers_bounds():
    r = CounterRNG(1)
    vals = [r.integers(3) for _ in range(300)]
    assert set(vals) == {0, 1, 2}
    with pytest.raises(ValueError):
        r.integers(0)

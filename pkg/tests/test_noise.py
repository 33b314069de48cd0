import numpy as np
import pytest

from neqfe.noise import THREADS_ENV, generators, seed_key, thread_count, trajectory_generator


def test_stream_is_independent_of_chunking():
    key = seed_key(7)
    whole = trajectory_generator(key, 0, 12).standard_normal(1000)
    g = trajectory_generator(key, 0, 12)
    parts = np.concatenate([g.standard_normal(n) for n in (1, 99, 400, 500)])
    np.testing.assert_array_equal(whole, parts)


def test_streams_differ_by_index_stream_and_seed():
    a = generators(1, 0, 0, 3)
    draws = [g.standard_normal(4) for g in a]
    assert not np.array_equal(draws[0], draws[1])
    assert not np.array_equal(trajectory_generator(seed_key(1), 1, 0).standard_normal(4), draws[0])
    assert not np.array_equal(trajectory_generator(seed_key(2), 0, 0).standard_normal(4), draws[0])


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ValueError):
        thread_count()

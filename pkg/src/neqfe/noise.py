"""Counter-based random streams, one per trajectory.

Trajectory ``i`` of stream ``s`` under seed ``seed`` always sees the same
numbers: a Philox generator keyed by the seed with counter (0, 0, i, s).
Results therefore do not depend on block sizes, chunking or thread count.
"""
from __future__ import annotations

import os

import numpy as np

THREADS_ENV = "NEQFE_NUM_THREADS"


def seed_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def trajectory_generator(key: np.ndarray, stream: int, index: int) -> np.random.Generator:
    counter = np.array([0, 0, index, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def generators(seed: int, stream: int, start: int, stop: int) -> list:
    key = seed_key(seed)
    return [trajectory_generator(key, stream, i) for i in range(start, stop)]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n

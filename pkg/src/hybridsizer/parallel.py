"""Ordered map over episode rollouts, inline or in a process pool.

Workers receive the environment once through the pool initializer and
return plain floats/arrays; results are always reassembled in task order,
so the outcome does not depend on the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

_ENV = None


def _init_worker(env):
    global _ENV
    _ENV = env


def _run_chunk(fn, chunk):
    return [fn(_ENV, *task) for task in chunk]


class RolloutPool:
    def __init__(self, env, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.env = env
        self.workers = workers
        self._ex = None
        if workers > 1:
            self._ex = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(env,))

    def map(self, fn, tasks: list) -> list:
        """``[fn(env, *task) for task in tasks]``, possibly in parallel."""
        if self._ex is None or len(tasks) < 2:
            return [fn(self.env, *task) for task in tasks]
        n = min(self.workers, len(tasks))
        size = -(-len(tasks) // n)
        chunks = [tasks[i:i + size] for i in range(0, len(tasks), size)]
        out = []
        for part in self._ex.map(_run_chunk, [fn] * len(chunks), chunks):
            out.extend(part)
        return out

    def close(self):
        if self._ex is not None:
            self._ex.shutdown()
            self._ex = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

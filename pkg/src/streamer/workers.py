"""Reusable thread team with barrier-fenced timed execution.

One team is created per configuration at the largest worker count and reused
across thread sweeps; surplus workers park at the barriers so team size never
perturbs timing.  Workers pin themselves, since thread affinity applies to the
calling thread only.
"""

from __future__ import annotations

import threading
import time
from typing import Callable

Task = Callable[[int, int], None]  # (worker_index, active_workers)


class WorkerTeamError(RuntimeError):
    """A worker terminated abnormally or the team was misused."""


class WorkerTeam:
    def __init__(self, size: int):
        if size < 1:
            raise ValueError("team size must be at least 1")
        self._size = size
        self._active = size
        self._barrier = threading.Barrier(size + 1)
        self._lock = threading.Lock()
        self._task: Task | None = None
        self._errors: list[tuple[int, BaseException]] = []
        self._shutdown = False
        self._closed = False
        self._unpinned = False
        self._threads = [
            threading.Thread(target=self._worker, args=(i,), daemon=True)
            for i in range(size)
        ]
        for t in self._threads:
            t.start()

    @property
    def size(self) -> int:
        return self._size

    @property
    def active(self) -> int:
        return self._active

    @property
    def unpinned(self) -> bool:
        """True when the most recent set_affinity could not pin every worker."""
        return self._unpinned

    def _worker(self, idx: int) -> None:
        while True:
            self._barrier.wait()
            if self._shutdown:
                return
            task = self._task
            active = self._active
            try:
                if task is not None and idx < active:
                    task(idx, active)
            except BaseException as exc:  # noqa: BLE001  (must reach the barrier)
                with self._lock:
                    self._errors.append((idx, exc))
            finally:
                self._barrier.wait()

    def run(self, task: Task) -> float:
        """Run task on the active workers; return barrier-to-barrier seconds."""
        if self._closed:
            raise WorkerTeamError("team is closed")
        self._errors.clear()
        self._task = task
        self._barrier.wait()
        t0 = time.perf_counter()
        self._barrier.wait()
        t1 = time.perf_counter()
        self._task = None
        if self._errors:
            idx, exc = self._errors[0]
            raise WorkerTeamError(f"worker {idx} failed: {exc!r}") from exc
        return t1 - t0

    def set_active(self, nworkers: int) -> None:
        """Use the first nworkers workers for subsequent runs, unpinned."""
        if not 1 <= nworkers <= self._size:
            raise ValueError(f"active workers must be in 1..{self._size}")
        self._active = nworkers

    def set_affinity(self, cpus: list[int]) -> None:
        """Pin worker i to cpus[i] and activate exactly len(cpus) workers.

        Any pin failure, including a cpu id the running host does not have
        (normal when benchmarking against a described topology), downgrades
        that worker to unpinned execution and sets the unpinned flag.
        """
        from .topology import pin_worker

        cpus = list(cpus)
        if not 1 <= len(cpus) <= self._size:
            raise ValueError(f"need 1..{self._size} cpus, got {len(cpus)}")
        self.set_active(len(cpus))
        results = [True] * len(cpus)

        def pin(idx: int, nworkers: int) -> None:
            try:
                results[idx] = pin_worker(cpus[idx])
            except ValueError:
                results[idx] = False

        self.run(pin)
        self._unpinned = not all(results)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._shutdown = True
        self._barrier.wait()
        for t in self._threads:
            t.join()

    def __enter__(self) -> "WorkerTeam":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

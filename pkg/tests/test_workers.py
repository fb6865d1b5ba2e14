"""Worker team lifecycle, chunk dispatch, and failure propagation."""

import os
import threading

import pytest

from streamer.workers import WorkerTeam, WorkerTeamError


def test_runs_task_on_each_active_worker():
    seen = []
    lock = threading.Lock()
    with WorkerTeam(4) as team:

        def task(idx, nworkers):
            with lock:
                seen.append((idx, nworkers))

        seconds = team.run(task)
    assert seconds > 0
    assert sorted(seen) == [(0, 4), (1, 4), (2, 4), (3, 4)]


def test_surplus_workers_park():
    seen = []
    lock = threading.Lock()
    with WorkerTeam(4) as team:
        team.set_active(2)

        def task(idx, nworkers):
            with lock:
                seen.append((idx, nworkers))

        team.run(task)
        team.run(task)  # the team is reusable at the same size
    assert sorted(seen) == [(0, 2), (0, 2), (1, 2), (1, 2)]


def test_set_active_bounds():
    with WorkerTeam(2) as team:
        with pytest.raises(ValueError):
            team.set_active(0)
        with pytest.raises(ValueError):
            team.set_active(3)


def test_worker_exception_propagates_and_team_survives():
    with WorkerTeam(3) as team:

        def bad(idx, nworkers):
            if idx == 1:
                raise RuntimeError("kaput")

        with pytest.raises(WorkerTeamError, match="worker 1 failed"):
            team.run(bad)
        assert team.run(lambda i, n: None) > 0  # still serviceable


def test_closed_team_refuses_work():
    team = WorkerTeam(1)
    team.close()
    team.close()  # idempotent
    with pytest.raises(WorkerTeamError, match="closed"):
        team.run(lambda i, n: None)


@pytest.mark.skipif(not hasattr(os, "sched_setaffinity"), reason="no thread pinning")
def test_set_affinity_pins_existing_cpu():
    cpu = min(os.sched_getaffinity(0))
    with WorkerTeam(2) as team:
        team.set_affinity([cpu])
        assert team.active == 1
        assert team.unpinned is False


def test_set_affinity_nonexistent_cpu_downgrades_to_unpinned():
    # described topologies legitimately name cpus this host lacks
    with WorkerTeam(2) as team:
        team.set_affinity([4094, 4095])
        assert team.unpinned is True
        assert team.run(lambda i, n: None) > 0


def test_set_affinity_size_bounds():
    with WorkerTeam(2) as team:
        with pytest.raises(ValueError, match="cpus"):
            team.set_affinity([0, 1, 2])
        with pytest.raises(ValueError, match="cpus"):
            team.set_affinity([])

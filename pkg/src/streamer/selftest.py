"""Deterministic desk-scale checks of the suite's own machinery.

Runs in well under a minute with no hardware assumptions: the validation
oracle at small array sizes, crash-point enumeration over a 1 MiB pool, and
the affinity assignment properties over seeded random topologies.  A named
fault can be injected to demonstrate that the checks actually detect the
failures they claim to cover.
"""

from __future__ import annotations

import random
import shutil
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .kernels import (
    KERNEL_ORDER,
    KernelKind,
    VectorTriple,
    bytes_moved,
    init_arrays,
    run_kernel,
    validate,
)
from .pool import BackingSpec, ObjectHandle, Pool, PoolError
from .topology import (
    AffinityPolicy,
    MemNode,
    NodeKind,
    TopologyMap,
    assign_affinity,
)
from .workers import WorkerTeam

FAULTS = ("tx-atomicity",)
_CRASH_LAYOUT = "crash-check"
_CRASH_POOL_SIZE = 1 << 20
_ROOT = struct.Struct("<6Q")


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


@dataclass
class CrashReport:
    """Outcome of replaying every captured crash point of the scripted run."""

    crash_points: int
    tx_points: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class _Collector:
    """Sync hook that photographs the backing file at each durable flush."""

    def __init__(self, path: Path, outdir: Path):
        self.path = path
        self.outdir = outdir
        self.phase = "seed"
        self.snapshots: list[tuple[str, str, Path]] = []  # (phase, label, copy)

    def __call__(self, label: str) -> None:
        copy = self.outdir / f"crash{len(self.snapshots):03d}"
        shutil.copyfile(self.path, copy)
        self.snapshots.append((self.phase, label, copy))


def _images(pool: Pool, handles: tuple[ObjectHandle, ...]) -> tuple[bytes, ...]:
    return tuple(pool.read(h) for h in handles)


def _crash_script(collector: _Collector, path: Path):
    """Scripted pool life with transactional mutations at every durable point.

    Returns the root record offsets plus the two consistent states: the seeded
    image (pre-transaction) and the committed image (post-transaction).
    """
    pool = Pool.create(
        BackingSpec.file(path), _CRASH_LAYOUT, _CRASH_POOL_SIZE, sync_hook=collector
    )
    h1, h2, h3 = pool.alloc(256), pool.alloc(512), pool.alloc(128)
    rb = pool.alloc(_ROOT.size)
    pool.write(rb, _ROOT.pack(h1.offset, h1.length, h2.offset, h2.length, h3.offset, h3.length))
    pool.persist(rb)
    pool.set_root(rb)
    for i, h in enumerate((h1, h2, h3)):
        pool.write(h, bytes((i * 31 + j) % 251 for j in range(h.length)))
        pool.persist(h)
    before = _images(pool, (h1, h2, h3))

    collector.phase = "tx"
    # committed transaction: crash anywhere must land on before or after
    tx = pool.tx_begin()
    for h in (h1, h2, h3):
        tx.add_range(h)
    for i, h in enumerate((h1, h2, h3)):
        pool.write(h, bytes((i * 97 + 5 * j) % 253 for j in range(h.length)))
        collector(f"mid-write-{i}")  # unflushed stores are visible to the copy
    tx.commit()
    after = _images(pool, (h1, h2, h3))

    # aborted transaction: crash anywhere must land back on the committed image
    tx = pool.tx_begin()
    tx.add_range(h1)
    tx.add_range(h2)
    pool.write(h1, b"\xee" * h1.length)
    collector("mid-write-abort")
    pool.write(h2, b"\xdd" * h2.length)
    tx.abort()

    pool.close()
    return before, after


def run_crash_atomicity(workdir: str | Path | None = None, replay: bool = True) -> CrashReport:
    """Enumerate crash points over a scripted 1 MiB pool and re-open each copy.

    Every durable flush (and each deliberately torn mid-write moment) yields a
    file snapshot.  Seed-phase snapshots must merely reopen; transaction-phase
    snapshots must match the pre- or post-transaction image byte for byte.
    Passing replay=False skips log rollback on reopen, which is the injected
    fault the tx-atomicity check is expected to catch.
    """
    own_tmp = workdir is None
    workdir = Path(tempfile.mkdtemp(prefix="crash-")) if own_tmp else Path(workdir)
    try:
        path = workdir / "pool.img"
        collector = _Collector(path, workdir)
        before, after = _crash_script(collector, path)

        failures: list[str] = []
        tx_points = 0
        for idx, (phase, label, copy) in enumerate(collector.snapshots):
            try:
                crashed = Pool.open(
                    BackingSpec.file(copy), _CRASH_LAYOUT, _replay=replay
                )
            except PoolError as exc:
                failures.append(f"crash point {idx} ({label}): reopen failed: {exc}")
                continue
            try:
                if phase != "tx":
                    continue
                tx_points += 1
                root = crashed.root()
                if root is None:
                    failures.append(f"crash point {idx} ({label}): root lost")
                    continue
                vals = _ROOT.unpack(crashed.read(root))
                handles = tuple(
                    ObjectHandle(vals[2 * i], vals[2 * i + 1]) for i in range(3)
                )
                state = _images(crashed, handles)
                if state != before and state != after:
                    failures.append(
                        f"crash point {idx} ({label}): covered ranges are neither "
                        "all pre- nor all post-transaction"
                    )
            finally:
                crashed.close()
        return CrashReport(
            crash_points=len(collector.snapshots),
            tx_points=tx_points,
            failures=failures,
        )
    finally:
        if own_tmp:
            shutil.rmtree(workdir, ignore_errors=True)


# -- affinity properties --------------------------------------------------------


def random_topologies(count: int = 50, seed: int = 20240901, cxl_every: int = 5):
    """Seeded random layouts: 1..4 nodes, 1..32 cpus each, sparse cpu ids.

    Every cxl_every-th topology gains an extra cpu-less node so assignment is
    exercised against memory-only nodes too.
    """
    rng = random.Random(seed)
    topos = []
    for i in range(count):
        nnodes = rng.randint(1, 4)
        nodes = []
        cpu = rng.randint(0, 3)
        for nid in range(nnodes):
            ncpus = rng.randint(1, 32)
            cpus = []
            for _ in range(ncpus):
                cpus.append(cpu)
                cpu += rng.randint(1, 3)
            nodes.append(MemNode(nid, tuple(cpus), 10**9, NodeKind.ONNODE))
        if cxl_every and i % cxl_every == 0:
            nodes.append(MemNode(nnodes, (), 10**9, NodeKind.CXL_ATTACHED))
        topos.append(TopologyMap(tuple(nodes)))
    return topos


def check_affinity_properties(topo: TopologyMap) -> list[str]:
    """All assignment invariants for every legal thread count of one topology."""
    problems: list[str] = []
    pools = {n.id: list(n.cpus) for n in topo.nodes_with_cpus()}
    flat = [c for n in topo.nodes_with_cpus() for c in n.cpus]
    total = len(flat)
    cpu_node = {c: nid for nid, cpus in pools.items() for c in cpus}

    for t in range(1, total + 1):
        close = assign_affinity(topo, AffinityPolicy.close(), t)
        spread = assign_affinity(topo, AffinityPolicy.spread(), t)
        for name, picks in (("close", close), ("spread", spread)):
            if len(picks) != t:
                problems.append(f"{name} t={t}: wrong count")
            if len(set(picks)) != len(picks):
                problems.append(f"{name} t={t}: duplicate cpu")
            if any(c not in cpu_node for c in picks):
                problems.append(f"{name} t={t}: unknown cpu")
        if close != flat[:t]:
            problems.append(f"close t={t}: not a prefix of node-ordered cpus")
        counts = {nid: 0 for nid in pools}
        for c in spread:
            counts[cpu_node[c]] += 1
        for i in counts:
            for j in counts:
                exhausted = counts[j] == len(pools[j])
                if counts[i] > counts[j] + 1 and not exhausted:
                    problems.append(f"spread t={t}: skew between nodes {i} and {j}")
        if t == total:
            if set(close) != set(flat) or set(spread) != set(flat):
                problems.append("full occupancy: cpu sets differ")
    for policy in (AffinityPolicy.close(), AffinityPolicy.spread()):
        try:
            assign_affinity(topo, policy, total + 1)
            problems.append(f"{policy.name}: oversubscription not refused")
        except ValueError:
            pass
    return problems


# -- named checks -----------------------------------------------------------------


def _check_kernel_validation() -> tuple[bool, str]:
    n = 100_000
    cases = [(2, 3.0, 1), (4, 0.5, 2)]
    for ntimes, scalar, nthreads in cases:
        v = VectorTriple.in_memory(n)
        with WorkerTeam(nthreads) as team:
            init_arrays(v, team)
            for _ in range(ntimes):
                for kind in KERNEL_ORDER:
                    run_kernel(kind, v, scalar, team)
        if not validate(v, ntimes, scalar):
            return False, f"validation failed at ntimes={ntimes} scalar={scalar}"
        v.a[0] += 1e-3  # the check must notice a corrupted element
        if validate(v, ntimes, scalar):
            return False, "validation accepted a corrupted array"
    return True, f"{len(cases)} runs validated at n={n}"


def _check_traffic_accounting() -> tuple[bool, str]:
    checked = 0
    for n in range(0, 65):
        for kind in KERNEL_ORDER:
            loads_stores = {
                KernelKind.COPY: 2,
                KernelKind.SCALE: 2,
                KernelKind.ADD: 3,
                KernelKind.TRIAD: 3,
            }[kind] * n
            if bytes_moved(kind, n) != 8 * loads_stores:
                return False, f"{kind.label} n={n}: traffic mismatch"
            checked += 1
    return True, f"{checked} kernel/size points match the word count"


def _check_tx_atomicity(fault: str | None) -> tuple[bool, str]:
    report = run_crash_atomicity(replay=(fault != "tx-atomicity"))
    if not report.ok:
        return False, report.failures[0]
    return True, (
        f"{report.crash_points} crash points, {report.tx_points} transactional, "
        "all consistent"
    )


def _check_pool_roundtrip() -> tuple[bool, str]:
    with tempfile.TemporaryDirectory(prefix="roundtrip-") as tmp:
        path = Path(tmp) / "pool.img"
        pool = Pool.create(BackingSpec.file(path), "roundtrip", 1 << 20)
        h = pool.alloc(800)
        view = pool.view_float64(h)
        view[:] = [float(i) * 0.5 for i in range(100)]
        pool.persist(h)
        pool.set_root(h)
        del view
        pool.close()
        reopened = Pool.open(BackingSpec.file(path), "roundtrip")
        root = reopened.root()
        values = list(reopened.view_float64(root))
        reopened.close()
        if values != [float(i) * 0.5 for i in range(100)]:
            return False, "values changed across close/open"
        try:
            Pool.open(BackingSpec.file(path), "something-else")
            return False, "wrong layout name was accepted"
        except PoolError as exc:
            if "layout" not in str(exc):
                return False, f"unexpected error for wrong layout: {exc}"
    return True, "100 floats survived reopen; wrong layout refused"


def _check_affinity() -> tuple[bool, str]:
    topos = random_topologies(count=25)
    for i, topo in enumerate(topos):
        problems = check_affinity_properties(topo)
        if problems:
            return False, f"topology {i}: {problems[0]}"
    return True, f"{len(topos)} random topologies hold all assignment invariants"


def run_selftest(fault: str | None = None) -> list[CheckResult]:
    """Run every named check; an injected fault must flip its check to failing."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault '{fault}'")
    checks = [
        ("kernel-validation", lambda: _check_kernel_validation()),
        ("traffic-accounting", lambda: _check_traffic_accounting()),
        ("tx-atomicity", lambda: _check_tx_atomicity(fault)),
        ("pool-roundtrip", lambda: _check_pool_roundtrip()),
        ("affinity-assignment", lambda: _check_affinity()),
    ]
    results = []
    for name, fn in checks:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, ok, detail, time.perf_counter() - start))
    return results

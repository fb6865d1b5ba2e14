"""Array placement backends: node-bound volatile memory and pool-backed arrays.

Two modes produce the same VectorTriple contract.  Numa mode models memory
expansion: plain anonymous mappings bound to a target node, touched first by
the worker team.  Pmem mode models direct access: the arrays live inside a
persistent object pool and are set up through the pool's transactional path.
Kernels never see the difference, which is the point of the comparison.
"""

from __future__ import annotations

import enum
import logging
import mmap
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numabind
from .kernels import VectorTriple
from .pool import (
    ALIGNMENT,
    LOG_ENTRY,
    MIN_POOL_SIZE,
    BackingSpec,
    ObjectHandle,
    Pool,
    PoolError,
    heap_capacity,
)
from .topology import TopologyMap

log = logging.getLogger(__name__)

DEFAULT_LAYOUT = "stream-arrays"
_ROOT_BLOCK = struct.Struct("<8Q")  # n, offset, then (offset, length) per array


class PlacementError(Exception):
    """Requested placement cannot be satisfied."""


class PlacementMode(enum.Enum):
    NUMA = "numa"
    PMEM = "pmem"


@dataclass(frozen=True)
class PlacementSpec:
    """Which mode holds the arrays and on which memory node.

    backing applies to pmem mode only; when omitted the pool is an anonymous
    region bound to mem_node, so both modes target the same physical memory.
    """

    mode: PlacementMode
    mem_node: int
    backing: BackingSpec | None = None

    def __post_init__(self):
        if self.mem_node < 0:
            raise ValueError("mem_node must be non-negative")
        if self.mode is PlacementMode.NUMA and self.backing is not None:
            raise ValueError("numa mode takes no backing")

    def resolved_backing(self) -> BackingSpec:
        if self.backing is not None:
            return self.backing
        return BackingSpec.anonymous_numa(self.mem_node)


class NumaRegion:
    """Anonymous mapping with a strict single-node allocation policy."""

    def __init__(self, length: int, node: int, allow_unbound: bool = False):
        self.length = max(length, mmap.PAGESIZE)
        self.node = node
        self.mm = mmap.mmap(-1, self.length)
        self.address = numabind.buffer_address(self.mm)
        self.bound = False
        if numabind.trivially_local(node):
            self.bound = True
            return
        try:
            numabind.bind_range(self.address, self.length, node)
            self.bound = True
        except numabind.NumaBindError as exc:
            if not allow_unbound:
                self.mm.close()
                raise PlacementError("numa bind unavailable") from exc
            log.warning("node %d bind failed (%s), continuing unbound", node, exc)

    def close(self) -> None:
        try:
            self.mm.close()
        except BufferError:
            pass  # released when the last view dies


class _NumaBackend:
    def __init__(self, regions: list[NumaRegion]):
        self.regions = regions
        self.released = False

    @property
    def mode(self) -> PlacementMode:
        return PlacementMode.NUMA

    @property
    def unbound(self) -> bool:
        return any(not r.bound for r in self.regions)

    def release(self, triple: VectorTriple, delete_file: bool) -> None:
        if self.released:
            return
        self.released = True
        triple.a = triple.b = triple.c = None
        for r in self.regions:
            r.close()


class _PmemBackend:
    def __init__(self, pool: Pool, handles: tuple[ObjectHandle, ...], path: Path | None):
        self.pool = pool
        self.handles = handles
        self.path = path
        self.released = False

    @property
    def mode(self) -> PlacementMode:
        return PlacementMode.PMEM

    @property
    def unbound(self) -> bool:
        return self.pool.numa_bound is False

    def release(self, triple: VectorTriple, delete_file: bool) -> None:
        if self.released:
            return
        self.released = True
        triple.a = triple.b = triple.c = None
        self.pool.close()
        if delete_file and self.path is not None:
            self.path.unlink(missing_ok=True)


def default_pool_size(data_bytes: int) -> int:
    """Pool size that leaves the heap comfortable: twice the data, 1 MiB floor."""
    needed = data_bytes + _ROOT_BLOCK.size + 16 + 6 * ALIGNMENT
    size = max(2 * data_bytes, MIN_POOL_SIZE)
    while heap_capacity(size) < needed:
        size += max(size // 4, MIN_POOL_SIZE)
    return size


def _tx_cover_bytes(pool: Pool, array_bytes: int) -> int:
    """Per-array prefix the undo log can snapshot in one transaction.

    The log holds pool_size/16 bytes, so covering three full arrays is only
    possible for small runs; larger arrays get a leading slice each, which
    still exercises the log append, commit, and rollback machinery.
    """
    budget = (pool._log_capacity - 3 * LOG_ENTRY.size) // 3
    return max(0, min(array_bytes, budget // 8 * 8))


def _init_transactional(pool: Pool, handles: tuple[ObjectHandle, ...], arrays) -> None:
    """Listing-style setup: one transaction covering all three arrays."""
    cover = _tx_cover_bytes(pool, handles[0].length)
    with pool.transaction() as tx:
        for h in handles:
            tx.add_range(h, 0, cover)
        a, b, c = arrays
        a[:] = 1.0
        b[:] = 2.0
        c[:] = 0.0
        a *= 2.0
    for h in handles:
        pool.persist(h)


def _allocate_numa(spec: PlacementSpec, n: int, offset: int, allow_unbound: bool) -> VectorTriple:
    nbytes = 8 * (n + offset)
    regions: list[NumaRegion] = []
    try:
        for _ in range(3):
            regions.append(NumaRegion(nbytes, spec.mem_node, allow_unbound))
    except PlacementError:
        for r in regions:
            r.close()
        raise
    arrays = [
        np.frombuffer(r.mm, dtype=np.float64, count=n + offset) for r in regions
    ]
    return VectorTriple(
        a=arrays[0], b=arrays[1], c=arrays[2],
        length=n, offset=offset, backend=_NumaBackend(regions),
    )


def _pmem_views(pool: Pool, handles, n: int, offset: int):
    return [pool.view_float64(h, count=n + offset) for h in handles]


def _allocate_pmem(
    spec: PlacementSpec,
    n: int,
    offset: int,
    pool_size: int | None,
    allow_unbound: bool,
) -> VectorTriple:
    nbytes = 8 * (n + offset)
    backing = spec.resolved_backing()
    path = backing.path

    if path is not None and path.exists() and Pool._is_valid_pool(path):
        pool = Pool.open(backing, DEFAULT_LAYOUT)
        root = pool.root()
        if root is None or root.length != _ROOT_BLOCK.size:
            pool.close()
            raise PlacementError("pool has no array root")
        vals = _ROOT_BLOCK.unpack(pool.read(root))
        if vals[0] != n or vals[1] != offset:
            pool.close()
            raise PlacementError("pool layout does not match requested arrays")
        handles = tuple(ObjectHandle(vals[2 + 2 * i], vals[3 + 2 * i]) for i in range(3))
        arrays = _pmem_views(pool, handles, n, offset)
        return VectorTriple(
            a=arrays[0], b=arrays[1], c=arrays[2],
            length=n, offset=offset, backend=_PmemBackend(pool, handles, path),
        )

    size = pool_size if pool_size is not None else default_pool_size(3 * nbytes)
    needed = 3 * nbytes + _ROOT_BLOCK.size + 16 + 6 * ALIGNMENT
    if heap_capacity(size) < needed:
        raise PlacementError("pool too small for arrays")
    try:
        pool = Pool.create(backing, DEFAULT_LAYOUT, size, allow_unbound=allow_unbound)
    except numabind.NumaBindError as exc:
        raise PlacementError("numa bind unavailable") from exc
    try:
        handles = tuple(pool.alloc(nbytes) for _ in range(3))
        root = pool.alloc(_ROOT_BLOCK.size)
        pool.write(root, _ROOT_BLOCK.pack(
            n, offset,
            handles[0].offset, handles[0].length,
            handles[1].offset, handles[1].length,
            handles[2].offset, handles[2].length,
        ))
        pool.persist(root)
        pool.set_root(root)
        arrays = _pmem_views(pool, handles, n, offset)
        _init_transactional(pool, handles, arrays)
    except BaseException:
        pool.close()
        raise
    return VectorTriple(
        a=arrays[0], b=arrays[1], c=arrays[2],
        length=n, offset=offset, backend=_PmemBackend(pool, handles, path),
    )


def allocate_triple(
    spec: PlacementSpec,
    n: int,
    offset: int = 0,
    pool_size: int | None = None,
    topo: TopologyMap | None = None,
    allow_unbound: bool = False,
) -> VectorTriple:
    """Allocate the three arrays per the placement spec.

    Numa arrays come back untouched so the worker team's first store decides
    nothing (the bind already did, but unbound fallback keeps first-touch
    meaningful).  Pmem arrays come back initialized through one transaction
    and persisted.
    """
    if n <= 0:
        raise PlacementError("array size must be positive")
    if offset < 0:
        raise PlacementError("offset must be non-negative")
    if topo is not None and not topo.has_node(spec.mem_node):
        raise PlacementError(f"no such node {spec.mem_node}")
    if spec.mode is PlacementMode.NUMA:
        return _allocate_numa(spec, n, offset, allow_unbound)
    return _allocate_pmem(spec, n, offset, pool_size, allow_unbound)


def release_triple(v: VectorTriple, delete_file: bool = False) -> None:
    """Release backing storage.  Safe to call twice; the triple is dead after.

    File-backed pools are kept on disk unless delete_file is set, so a later
    run can reopen them.
    """
    if v.backend is not None:
        v.backend.release(v, delete_file)
    else:
        v.a = v.b = v.c = None


def residency_nodes(v: VectorTriple, samples: int = 16) -> list[int] | None:
    """Sample the nodes holding the triple's pages; None when unsupported.

    Only meaningful after the arrays have been touched.
    """
    be = v.backend
    if isinstance(be, _NumaBackend):
        out: list[int] = []
        for r in be.regions:
            nodes = numabind.page_nodes(r.address, r.length, samples)
            if nodes is None:
                return None
            out.extend(nodes)
        return out
    if isinstance(be, _PmemBackend) and be.pool.backing.kind == "anonymous-numa":
        mm = be.pool._mm
        return numabind.page_nodes(numabind.buffer_address(mm), len(mm), samples)
    return None

"""Transactional persistent object pool over a mapped file or anonymous region.

The pool mimics a direct-access programming model: a fixed header, an undo
log, and a bump-allocated heap live in one mapping, and in-place writes become
durable through explicit persist calls.  Transactions snapshot prior bytes
into the log before modification, so a crash between log append and commit
rolls the covered ranges back on the next open.

Durability ordering is the core invariant: log entries are flushed before
their covered ranges change, covered ranges are flushed before the log is
truncated, and header updates are flushed before new handles are handed out.
A sync hook fires after every durable flush so tests can photograph the
backing file at each crash point.
"""

from __future__ import annotations

import contextlib
import enum
import mmap
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import numabind

MAGIC = b"STRMPOOL"
VERSION = 1
HEADER = struct.Struct("<8sI64sQQQQQ")  # magic, version, layout, size, root, heap, log off, log cap
HEADER_RESERVED = 4096
MIN_POOL_SIZE = 1 << 20
ALIGNMENT = 16
LOG_FRACTION = 16  # log capacity = pool_size // 16
LOG_ENTRY = struct.Struct("<QQII")  # offset, length, crc32, pad


class PoolError(Exception):
    """Pool misuse, format violation, or exhausted capacity."""


@dataclass(frozen=True)
class BackingSpec:
    """Where a pool lives: a filesystem path or an anonymous node-bound region.

    Exactly one of path and numa_node is set.
    """

    path: Path | None = None
    numa_node: int | None = None

    def __post_init__(self):
        if (self.path is None) == (self.numa_node is None):
            raise ValueError("backing is either a file path or a numa node")

    @classmethod
    def file(cls, path: str | Path) -> "BackingSpec":
        return cls(path=Path(path))

    @classmethod
    def anonymous_numa(cls, node: int) -> "BackingSpec":
        return cls(numa_node=node)

    @property
    def kind(self) -> str:
        return "file" if self.path is not None else "anonymous-numa"


@dataclass(frozen=True)
class ObjectHandle:
    """A pool-relative allocation: byte offset and length inside the heap."""

    offset: int
    length: int


class TxState(enum.Enum):
    ACTIVE = "active"
    COMMITTED = "committed"
    ABORTED = "aborted"


def _align_up(value: int, alignment: int) -> int:
    return (value + alignment - 1) // alignment * alignment


def heap_capacity(pool_size: int) -> int:
    """Usable heap bytes for a pool of the given total size."""
    heap_start = _align_up(HEADER_RESERVED + pool_size // LOG_FRACTION, ALIGNMENT)
    return max(0, pool_size - heap_start)


class Transaction:
    """Undo-log transaction.  One may be active per pool at a time.

    Ranges must be added before the covered bytes are modified; commit makes
    the new contents durable, abort restores the snapshots.
    """

    def __init__(self, pool: "Pool"):
        self._pool = pool
        self.state = TxState.ACTIVE
        self._entries: list[tuple[int, bytes]] = []  # (absolute offset, prior bytes)

    def _require_active(self) -> None:
        if self.state is not TxState.ACTIVE:
            raise PoolError("transaction not active")

    def add_range(self, handle: ObjectHandle, off: int = 0, length: int | None = None) -> None:
        """Snapshot [off, off+length) of the handle into the undo log."""
        self._require_active()
        pool = self._pool
        pool._require_open()
        if length is None:
            length = handle.length - off
        if off < 0 or length < 0 or off + length > handle.length:
            raise PoolError("range out of bounds")
        if length == 0:
            return
        absolute = handle.offset + off
        prior = bytes(pool._mm[absolute:absolute + length])
        entry_size = LOG_ENTRY.size + length
        if pool._log_cursor + entry_size > pool._log_offset + pool._log_capacity:
            raise PoolError("undo log full")
        LOG_ENTRY.pack_into(pool._mm, pool._log_cursor, absolute, length, zlib.crc32(prior), 0)
        pool._mm[pool._log_cursor + LOG_ENTRY.size:pool._log_cursor + entry_size] = prior
        pool._sync(pool._log_cursor, entry_size, "tx-add-range")
        pool._log_cursor += entry_size
        self._entries.append((absolute, prior))

    def commit(self) -> None:
        """Flush covered ranges, then truncate the log."""
        self._require_active()
        pool = self._pool
        pool._require_open()
        for absolute, prior in self._entries:
            pool._sync(absolute, len(prior), "tx-commit-data")
        pool._truncate_log("tx-commit-truncate")
        self.state = TxState.COMMITTED
        pool._active_tx = None

    def abort(self) -> None:
        """Restore every covered range to its snapshot, then truncate the log."""
        self._require_active()
        pool = self._pool
        pool._require_open()
        for absolute, prior in reversed(self._entries):
            pool._mm[absolute:absolute + len(prior)] = prior
            pool._sync(absolute, len(prior), "tx-abort-data")
        pool._truncate_log("tx-abort-truncate")
        self.state = TxState.ABORTED
        pool._active_tx = None


class Pool:
    """Open pool instance.  Use Pool.create or Pool.open, not the constructor."""

    def __init__(self, *_args, **_kwargs):
        raise TypeError("use Pool.create() or Pool.open()")

    @classmethod
    def _new(cls) -> "Pool":
        self = object.__new__(cls)
        self._mm = None
        self._file = None
        self._backing = None
        self._layout = ""
        self._pool_size = 0
        self._root_offset = 0
        self._heap_head = 0
        self._log_offset = HEADER_RESERVED
        self._log_capacity = 0
        self._log_cursor = HEADER_RESERVED
        self._active_tx = None
        self._closed = False
        self.numa_bound: bool | None = None  # anonymous backing only
        self.sync_hook: Callable[[str], None] | None = None
        return self

    # -- construction -----------------------------------------------------

    @classmethod
    def create(
        cls,
        backing: BackingSpec,
        layout: str,
        size: int,
        sync_hook: Callable[[str], None] | None = None,
        allow_unbound: bool = False,
    ) -> "Pool":
        """Create and open a fresh pool with an empty log and heap."""
        encoded = layout.encode("utf-8")
        if not 0 < len(encoded) < 64:
            raise PoolError("invalid layout")
        if size < MIN_POOL_SIZE:
            raise PoolError("too small")

        self = cls._new()
        self.sync_hook = sync_hook
        self._backing = backing
        self._layout = layout
        self._pool_size = size
        self._log_capacity = size // LOG_FRACTION
        self._heap_head = _align_up(HEADER_RESERVED + self._log_capacity, ALIGNMENT)
        self._log_cursor = self._log_offset

        if backing.path is not None:
            path = backing.path
            if path.exists() and cls._is_valid_pool(path):
                raise PoolError("already exists")
            f = open(path, "w+b")
            try:
                f.truncate(size)
                os.fsync(f.fileno())
                self._mm = mmap.mmap(f.fileno(), size)
            except BaseException:
                f.close()
                raise
            self._file = f
            with contextlib.suppress(OSError):
                os.chmod(path, 0o666)
        else:
            self._mm = mmap.mmap(-1, size)
            node = backing.numa_node
            if numabind.trivially_local(node):
                self.numa_bound = True
            else:
                try:
                    numabind.bind_range(numabind.buffer_address(self._mm), size, node)
                    self.numa_bound = True
                except numabind.NumaBindError:
                    if not allow_unbound:
                        self._mm.close()
                        raise
                    self.numa_bound = False
        self._write_header("create-header")
        return self

    @classmethod
    def open(
        cls,
        backing: BackingSpec,
        layout: str,
        sync_hook: Callable[[str], None] | None = None,
        _replay: bool = True,
    ) -> "Pool":
        """Open an existing file-backed pool, rolling back any landed log."""
        if backing.path is None:
            raise PoolError("anonymous pools cannot be reopened")
        path = backing.path
        try:
            raw = path.read_bytes()[:HEADER.size]
        except OSError as exc:
            raise PoolError(f"cannot read pool: {exc}") from exc
        if len(raw) < HEADER.size:
            raise PoolError("not a pool")
        magic, version, layout_raw, pool_size, root_offset, heap_head, log_offset, log_capacity = (
            HEADER.unpack(raw)
        )
        if magic != MAGIC:
            raise PoolError("not a pool")
        if version != VERSION:
            raise PoolError(f"unsupported pool version {version}")
        stored_layout = layout_raw.rstrip(b"\0").decode("utf-8", errors="replace")
        if stored_layout != layout:
            raise PoolError("layout mismatch")
        if path.stat().st_size < pool_size:
            raise PoolError("truncated pool")

        self = cls._new()
        self.sync_hook = sync_hook
        self._backing = backing
        self._layout = stored_layout
        self._pool_size = pool_size
        self._root_offset = root_offset
        self._heap_head = heap_head
        self._log_offset = log_offset
        self._log_capacity = log_capacity
        self._log_cursor = log_offset
        f = open(path, "r+b")
        try:
            self._mm = mmap.mmap(f.fileno(), pool_size)
        except BaseException:
            f.close()
            raise
        self._file = f
        if _replay:
            self._replay_log()
        return self

    @staticmethod
    def _is_valid_pool(path: Path) -> bool:
        try:
            with open(path, "rb") as f:
                head = f.read(12)
        except OSError:
            return False
        return len(head) == 12 and head[:8] == MAGIC and \
            int.from_bytes(head[8:12], "little") == VERSION

    # -- internals ---------------------------------------------------------

    def _require_open(self) -> None:
        if self._closed:
            raise PoolError("pool is closed")

    def _sync(self, offset: int, length: int, label: str) -> None:
        """Flush [offset, offset+length) to the backing store, then fire the hook.

        msync needs a page-aligned start, so the range is widened to page
        boundaries and clamped to the mapping.
        """
        if self._file is not None and length > 0:
            page = mmap.ALLOCATIONGRANULARITY
            start = offset - offset % page
            end = min(_align_up(offset + length, page), self._pool_size)
            self._mm.flush(start, end - start)
        if self.sync_hook is not None:
            self.sync_hook(label)

    def _write_header(self, label: str) -> None:
        HEADER.pack_into(
            self._mm,
            0,
            MAGIC,
            VERSION,
            self._layout.encode("utf-8"),
            self._pool_size,
            self._root_offset,
            self._heap_head,
            self._log_offset,
            self._log_capacity,
        )
        self._sync(0, HEADER.size, label)

    def _truncate_log(self, label: str) -> None:
        used = self._log_cursor - self._log_offset
        if used > 0:
            np.frombuffer(self._mm, dtype=np.uint8, count=used, offset=self._log_offset).fill(0)
            self._sync(self._log_offset, used, label)
        elif self.sync_hook is not None:
            self.sync_hook(label)
        self._log_cursor = self._log_offset

    def _replay_log(self) -> None:
        """Roll back complete log entries in reverse arrival order.

        The scan stops at a zero length word (unused log space), a torn or
        corrupt entry (checksum mismatch), or a range that cannot belong to
        the heap.  Everything before the stop point is a landed snapshot and
        is restored.
        """
        mm = self._mm
        log_end = self._log_offset + self._log_capacity
        cursor = self._log_offset
        entries: list[tuple[int, bytes]] = []
        while cursor + LOG_ENTRY.size <= log_end:
            offset, length, crc, _pad = LOG_ENTRY.unpack_from(mm, cursor)
            if length == 0:
                break
            if offset < HEADER_RESERVED or offset + length > self._pool_size:
                break
            if cursor + LOG_ENTRY.size + length > log_end:
                break
            prior = bytes(mm[cursor + LOG_ENTRY.size:cursor + LOG_ENTRY.size + length])
            if zlib.crc32(prior) != crc:
                break
            entries.append((offset, prior))
            cursor += LOG_ENTRY.size + length
        for offset, prior in reversed(entries):
            mm[offset:offset + len(prior)] = prior
            self._sync(offset, len(prior), "replay-restore")
        self._log_cursor = cursor
        self._truncate_log("replay-truncate")

    # -- allocation and access ---------------------------------------------

    @property
    def layout(self) -> str:
        return self._layout

    @property
    def pool_size(self) -> int:
        return self._pool_size

    @property
    def backing(self) -> BackingSpec:
        return self._backing

    @property
    def heap_start(self) -> int:
        return _align_up(HEADER_RESERVED + self._log_capacity, ALIGNMENT)

    @property
    def heap_head(self) -> int:
        return self._heap_head

    @property
    def heap_remaining(self) -> int:
        return self._pool_size - _align_up(self._heap_head, ALIGNMENT)

    @property
    def closed(self) -> bool:
        return self._closed

    def alloc(self, length: int) -> ObjectHandle:
        """Bump-allocate a zeroed, 16-byte aligned range.  There is no free."""
        self._require_open()
        if length <= 0:
            raise PoolError("allocation length must be positive")
        start = _align_up(self._heap_head, ALIGNMENT)
        if start + length > self._pool_size:
            raise PoolError("out of pool memory")
        np.frombuffer(self._mm, dtype=np.uint8, count=length, offset=start).fill(0)
        self._heap_head = start + length
        self._write_header("alloc")
        return ObjectHandle(start, length)

    def _check_range(self, handle: ObjectHandle, off: int, length: int) -> int:
        if off < 0 or length < 0 or off + length > handle.length:
            raise PoolError("range out of bounds")
        return handle.offset + off

    def read(self, handle: ObjectHandle, off: int = 0, length: int | None = None) -> bytes:
        self._require_open()
        if length is None:
            length = handle.length - off
        absolute = self._check_range(handle, off, length)
        return bytes(self._mm[absolute:absolute + length])

    def write(self, handle: ObjectHandle, data: bytes, off: int = 0) -> None:
        """In-place write; durability requires persist or a committed tx."""
        self._require_open()
        absolute = self._check_range(handle, off, len(data))
        self._mm[absolute:absolute + len(data)] = data

    def view_float64(self, handle: ObjectHandle, count: int | None = None) -> np.ndarray:
        """Zero-copy float64 view of the handle's bytes."""
        self._require_open()
        if count is None:
            count = handle.length // 8
        if count * 8 > handle.length:
            raise PoolError("range out of bounds")
        return np.frombuffer(self._mm, dtype=np.float64, count=count, offset=handle.offset)

    def persist(self, handle: ObjectHandle, off: int = 0, length: int | None = None) -> None:
        """Force the range to the backing store (ordering point when anonymous)."""
        self._require_open()
        if length is None:
            length = handle.length - off
        absolute = self._check_range(handle, off, length)
        self._sync(absolute, length, "persist")

    # -- transactions --------------------------------------------------------

    def tx_begin(self) -> Transaction:
        self._require_open()
        if self._active_tx is not None and self._active_tx.state is TxState.ACTIVE:
            raise PoolError("nested transaction unsupported")
        tx = Transaction(self)
        self._active_tx = tx
        return tx

    @contextlib.contextmanager
    def transaction(self):
        """Commit on clean exit, abort if the body raises."""
        tx = self.tx_begin()
        try:
            yield tx
        except BaseException:
            if tx.state is TxState.ACTIVE:
                tx.abort()
            raise
        else:
            if tx.state is TxState.ACTIVE:
                tx.commit()

    # -- root object ----------------------------------------------------------

    def set_root(self, handle: ObjectHandle) -> None:
        """Durably record the entry-point object.

        The handle goes into a small pool-owned record so its length survives
        reopen; the header stores the record's offset.
        """
        self._require_open()
        if handle.offset < self.heap_start or handle.offset + handle.length > self._pool_size:
            raise PoolError("range out of bounds")
        record = self.alloc(16)
        self.write(record, struct.pack("<QQ", handle.offset, handle.length))
        self.persist(record)
        self._root_offset = record.offset
        self._write_header("set-root")

    def root(self) -> ObjectHandle | None:
        self._require_open()
        if self._root_offset == 0:
            return None
        raw = bytes(self._mm[self._root_offset:self._root_offset + 16])
        offset, length = struct.unpack("<QQ", raw)
        return ObjectHandle(offset, length)

    # -- lifecycle --------------------------------------------------------------

    def close(self) -> None:
        """Flush and unmap.  Live numpy views keep the mapping alive until GC."""
        if self._closed:
            return
        self._closed = True
        if self._mm is not None:
            if self._file is not None:
                with contextlib.suppress(ValueError, OSError):
                    self._mm.flush()
            try:
                self._mm.close()
            except BufferError:
                pass  # outstanding views; the map is released when they die
        if self._file is not None:
            self._file.close()

    def __enter__(self) -> "Pool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

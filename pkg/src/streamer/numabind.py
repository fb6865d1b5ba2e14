"""Raw node-binding primitives over libnuma, loaded lazily via ctypes.

Only the thin syscall wrappers live here (mbind for placement, move_pages for
residency probes).  Policy decisions such as when unbound execution is
acceptable belong to the placement layer.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import glob
import mmap

MPOL_BIND = 2


class NumaBindError(Exception):
    """Node binding is unavailable or the kernel refused the request."""


_lib: ctypes.CDLL | None = None
_lib_tried = False


def _libnuma() -> ctypes.CDLL | None:
    global _lib, _lib_tried
    if _lib_tried:
        return _lib
    _lib_tried = True
    name = ctypes.util.find_library("numa") or "libnuma.so.1"
    try:
        lib = ctypes.CDLL(name, use_errno=True)
    except OSError:
        return None
    try:
        lib.mbind.restype = ctypes.c_long
        lib.mbind.argtypes = [
            ctypes.c_void_p,
            ctypes.c_ulong,
            ctypes.c_int,
            ctypes.POINTER(ctypes.c_ulong),
            ctypes.c_ulong,
            ctypes.c_uint,
        ]
        lib.move_pages.restype = ctypes.c_long
        lib.move_pages.argtypes = [
            ctypes.c_int,
            ctypes.c_ulong,
            ctypes.POINTER(ctypes.c_void_p),
            ctypes.POINTER(ctypes.c_int),
            ctypes.POINTER(ctypes.c_int),
            ctypes.c_int,
        ]
    except AttributeError:
        return None
    _lib = lib
    return _lib


def available() -> bool:
    return _libnuma() is not None


def host_node_count() -> int:
    """Nodes the running kernel exposes, independent of any descriptor file."""
    dirs = glob.glob("/sys/devices/system/node/node[0-9]*")
    return len(dirs) if dirs else 1


def trivially_local(node: int) -> bool:
    """Binding to node 0 of a single-node host changes nothing."""
    return node == 0 and host_node_count() <= 1


def buffer_address(buf) -> int:
    """Start address of a writable buffer (mmap regions are page aligned)."""
    obj = ctypes.c_char.from_buffer(buf)
    try:
        return ctypes.addressof(obj)
    finally:
        del obj


def bind_range(address: int, length: int, node: int) -> None:
    """Apply a strict single-node allocation policy to [address, address+length).

    Must run before first touch; pages fault in on the target node afterwards.
    """
    lib = _libnuma()
    if lib is None:
        raise NumaBindError("numa bind unavailable")
    if node < 0:
        raise NumaBindError(f"invalid node {node}")
    words = node // 64 + 1
    mask = (ctypes.c_ulong * words)()
    mask[node // 64] |= 1 << (node % 64)
    rc = lib.mbind(address, length, MPOL_BIND, mask, words * 64, 0)
    if rc != 0:
        err = ctypes.get_errno()
        raise NumaBindError(f"mbind to node {node} failed (errno {err})")


def page_nodes(address: int, length: int, samples: int = 16) -> list[int] | None:
    """Sample which node holds pages of a touched range; None when unsupported.

    Untouched pages report a negative status and are skipped.
    """
    lib = _libnuma()
    if lib is None:
        return None
    page = mmap.PAGESIZE
    npages = max(1, length // page)
    step = max(1, npages // samples)
    picks = list(range(0, npages, step))[:samples]
    count = len(picks)
    pages = (ctypes.c_void_p * count)(*[address + i * page for i in picks])
    status = (ctypes.c_int * count)()
    rc = lib.move_pages(0, count, pages, None, status, 0)
    if rc != 0:
        return None
    return [s for s in status if s >= 0]

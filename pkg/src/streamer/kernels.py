"""Vector streaming kernels, traffic accounting, and the end-of-run check.

The four kernels (Copy, Scale, Add, Triad) operate elementwise over three
64-bit float arrays.  Bandwidth is derived from the bytes each kernel moves
(2 or 3 words per element) and the best wall-clock time over the timed
iterations, with iteration 0 excluded as warm-up.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .workers import WorkerTeam

DEFAULT_SCALAR = 3.0
DEFAULT_NTIMES = 10
DEFAULT_EPSILON = 1e-13
WORD_BYTES = 8  # fixed 64-bit element type


class KernelKind(enum.Enum):
    """The four kernels with their per-element word traffic and flop counts."""

    COPY = ("Copy", 2, 0)
    SCALE = ("Scale", 2, 1)
    ADD = ("Add", 3, 1)
    TRIAD = ("Triad", 3, 2)

    def __init__(self, label: str, bytes_factor: int, flops_factor: int):
        self.label = label
        self.bytes_factor = bytes_factor
        self.flops_factor = flops_factor

    @classmethod
    def from_name(cls, name: str) -> "KernelKind":
        for k in cls:
            if k.label.lower() == name.strip().lower():
                return k
        raise ValueError(f"unknown kernel '{name}'")


# Fixed cycle order; the validation replay depends on it.
KERNEL_ORDER = (KernelKind.COPY, KernelKind.SCALE, KernelKind.ADD, KernelKind.TRIAD)


@dataclass
class VectorTriple:
    """The three benchmark arrays, resident in whatever backend owns them.

    All three arrays are allocated with ``length + offset`` elements; kernels
    touch only the first ``length``.  ``backend`` is the placement object that
    owns the storage (or None for plain in-process arrays).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    length: int
    offset: int = 0
    backend: Any = None

    def __post_init__(self):
        alloc = self.length + self.offset
        for name, arr in (("a", self.a), ("b", self.b), ("c", self.c)):
            if arr.dtype != np.float64:
                raise ValueError(f"array {name} must be float64")
            if arr.size != alloc:
                raise ValueError(
                    f"array {name} has {arr.size} elements, expected {alloc}"
                )

    @classmethod
    def in_memory(cls, length: int, offset: int = 0) -> "VectorTriple":
        """Plain process-heap triple, no placement backend."""
        alloc = length + offset
        return cls(
            a=np.empty(alloc, dtype=np.float64),
            b=np.empty(alloc, dtype=np.float64),
            c=np.empty(alloc, dtype=np.float64),
            length=length,
            offset=offset,
        )


@dataclass(frozen=True)
class TimingRecord:
    """Wall-clock seconds for each timed iteration of one kernel."""

    kernel: KernelKind
    iteration_times: tuple[float, ...]

    def __post_init__(self):
        if any(t <= 0 for t in self.iteration_times):
            raise ValueError("iteration times must be strictly positive")

    @property
    def ntimes(self) -> int:
        return len(self.iteration_times)


@dataclass(frozen=True)
class KernelResult:
    """Per-kernel statistics over iterations 1..ntimes-1 (iteration 0 excluded).

    best_rate_mbps uses MB = 10^6 bytes.
    """

    kernel: KernelKind
    n: int
    threads: int
    best_rate_mbps: float
    avg_time_s: float
    min_time_s: float
    max_time_s: float
    validated: bool = False


def chunk_bounds(n: int, nchunks: int, index: int) -> tuple[int, int]:
    """Contiguous static split of [0, n); remainder goes to the lowest chunks."""
    base, rem = divmod(n, nchunks)
    lo = index * base + min(index, rem)
    hi = lo + base + (1 if index < rem else 0)
    return lo, hi


def init_arrays(v: VectorTriple, workers: WorkerTeam | None = None) -> None:
    """Set a=1, b=2, c=0 and double a, so a=2 at the first kernel execution.

    When a worker team is given the fill is chunked across its active workers
    so first-touch page placement happens under the benchmark threads.
    """
    n = v.length + v.offset  # initialize padding too, as the reference does
    if n == 0:
        return

    def fill(idx: int, nworkers: int) -> None:
        lo, hi = chunk_bounds(n, nworkers, idx)
        v.a[lo:hi] = 1.0
        v.b[lo:hi] = 2.0
        v.c[lo:hi] = 0.0
        v.a[lo:hi] *= 2.0

    if workers is None:
        fill(0, 1)
    else:
        workers.run(fill)


def _copy(v: VectorTriple, scalar: float, lo: int, hi: int) -> None:
    np.copyto(v.c[lo:hi], v.a[lo:hi])


def _scale(v: VectorTriple, scalar: float, lo: int, hi: int) -> None:
    np.multiply(v.c[lo:hi], scalar, out=v.b[lo:hi])


def _add(v: VectorTriple, scalar: float, lo: int, hi: int) -> None:
    np.add(v.a[lo:hi], v.b[lo:hi], out=v.c[lo:hi])


def _triad(v: VectorTriple, scalar: float, lo: int, hi: int) -> None:
    # a = b + scalar*c without a temporary: multiply into a, then add b.
    out = v.a[lo:hi]
    np.multiply(v.c[lo:hi], scalar, out=out)
    out += v.b[lo:hi]


_KERNEL_FN = {
    KernelKind.COPY: _copy,
    KernelKind.SCALE: _scale,
    KernelKind.ADD: _add,
    KernelKind.TRIAD: _triad,
}


def run_kernel(
    kind: KernelKind,
    v: VectorTriple,
    scalar: float = DEFAULT_SCALAR,
    workers: WorkerTeam | None = None,
) -> float:
    """Execute one kernel pass over [0, length) and return its wall-clock seconds.

    Timing runs from a barrier immediately before the first element is touched
    to a barrier after the last worker finishes.  Chunks are disjoint, so the
    final contents are identical for any worker count.
    """
    fn = _KERNEL_FN[kind]
    n = v.length

    def task(idx: int, nworkers: int) -> None:
        lo, hi = chunk_bounds(n, nworkers, idx)
        if lo < hi:
            fn(v, scalar, lo, hi)

    if workers is None:
        with WorkerTeam(1) as team:
            return team.run(task)
    return workers.run(task)


def bytes_moved(kind: KernelKind, n: int) -> int:
    """Bytes the kernel reads plus writes over n elements."""
    if n < 0:
        raise ValueError("element count must be non-negative")
    return kind.bytes_factor * WORD_BYTES * n


def compute_result(
    tr: TimingRecord,
    n: int,
    threads: int = 1,
    validated: bool = False,
) -> KernelResult:
    """Fold a timing record into min/avg/max statistics and the best rate.

    Iteration 0 is excluded from the statistics (warm-up convention), so at
    least two iterations are required.
    """
    if tr.ntimes < 2:
        raise ValueError("insufficient iterations")
    steady = tr.iteration_times[1:]
    min_t = min(steady)
    max_t = max(steady)
    avg_t = sum(steady) / len(steady)
    rate = 1e-6 * bytes_moved(tr.kernel, n) / min_t
    return KernelResult(
        kernel=tr.kernel,
        n=n,
        threads=threads,
        best_rate_mbps=rate,
        avg_time_s=avg_t,
        min_time_s=min_t,
        max_time_s=max_t,
        validated=validated,
    )


def expected_values(
    ntimes: int,
    scalar: float = DEFAULT_SCALAR,
    kernels: Sequence[KernelKind] = KERNEL_ORDER,
) -> tuple[float, float, float]:
    """Replay the kernel cycle on scalars starting from (2, 2, 0).

    Every element of every array sees this exact operation sequence, so the
    scalars predict the uniform array contents after ``ntimes`` cycles.
    """
    aj, bj, cj = 2.0, 2.0, 0.0
    for _ in range(ntimes):
        for k in kernels:
            if k is KernelKind.COPY:
                cj = aj
            elif k is KernelKind.SCALE:
                bj = scalar * cj
            elif k is KernelKind.ADD:
                cj = aj + bj
            else:
                aj = bj + scalar * cj
    return aj, bj, cj


def validate(
    v: VectorTriple,
    ntimes: int,
    scalar: float = DEFAULT_SCALAR,
    epsilon: float = DEFAULT_EPSILON,
    kernels: Sequence[KernelKind] = KERNEL_ORDER,
) -> bool:
    """Check the arrays against the scalar replay of the completed run.

    Passes when each array's average relative error against its expected
    constant is below epsilon.  A zero expected value falls back to absolute
    error.  Returns False rather than raising; a failed check is a result.
    """
    aj, bj, cj = expected_values(ntimes, scalar, kernels)
    n = v.length
    if n == 0:
        return True
    for arr, exp in ((v.a, aj), (v.b, bj), (v.c, cj)):
        avg_err = float(np.mean(np.abs(arr[:n] - exp)))
        rel = avg_err / abs(exp) if exp != 0.0 else avg_err
        if not rel < epsilon:
            return False
    return True

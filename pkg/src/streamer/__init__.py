"""Memory-bandwidth benchmarking across placement modes and memory nodes.

The suite measures the classic four-kernel vector bandwidth workload against
local, remote-socket, and cpu-less (fabric-attached) memory, holding the
arrays either in plain node-bound mappings or inside a transactional
persistent object pool, and derives comparison metrics from the results.
"""

from .harness import (
    ConfigError,
    MatrixResult,
    MatrixRun,
    RunConfig,
    expand_class_presets,
    load_config,
    parse_config_text,
    run_matrix,
)
from .kernels import (
    DEFAULT_EPSILON,
    DEFAULT_NTIMES,
    DEFAULT_SCALAR,
    KERNEL_ORDER,
    KernelKind,
    KernelResult,
    TimingRecord,
    VectorTriple,
    bytes_moved,
    compute_result,
    expected_values,
    init_arrays,
    run_kernel,
    validate,
)
from .placement import (
    PlacementError,
    PlacementMode,
    PlacementSpec,
    allocate_triple,
    release_triple,
)
from .pool import (
    BackingSpec,
    ObjectHandle,
    Pool,
    PoolError,
    Transaction,
    TxState,
)
from .report import (
    CSV_HEADER,
    DerivedMetrics,
    ReportRow,
    degradation_pct,
    emit,
    fabric_overhead,
    mode_overhead_pct,
    parse_csv,
    saturation_point,
)
from .topology import (
    AffinityPolicy,
    MemNode,
    NodeKind,
    TopologyError,
    TopologyMap,
    assign_affinity,
    detect_topology,
    format_descriptor,
    parse_descriptor,
    pin_worker,
    resolve_topology,
)
from .workers import WorkerTeam, WorkerTeamError

__version__ = "0.1.0"

__all__ = [
    "AffinityPolicy",
    "BackingSpec",
    "CSV_HEADER",
    "ConfigError",
    "DEFAULT_EPSILON",
    "DEFAULT_NTIMES",
    "DEFAULT_SCALAR",
    "DerivedMetrics",
    "KERNEL_ORDER",
    "KernelKind",
    "KernelResult",
    "MatrixResult",
    "MatrixRun",
    "MemNode",
    "NodeKind",
    "ObjectHandle",
    "PlacementError",
    "PlacementMode",
    "PlacementSpec",
    "Pool",
    "PoolError",
    "ReportRow",
    "RunConfig",
    "TimingRecord",
    "TopologyError",
    "TopologyMap",
    "Transaction",
    "TxState",
    "VectorTriple",
    "WorkerTeam",
    "WorkerTeamError",
    "allocate_triple",
    "assign_affinity",
    "bytes_moved",
    "compute_result",
    "degradation_pct",
    "detect_topology",
    "emit",
    "expand_class_presets",
    "expected_values",
    "fabric_overhead",
    "format_descriptor",
    "init_arrays",
    "load_config",
    "mode_overhead_pct",
    "parse_config_text",
    "parse_csv",
    "parse_descriptor",
    "pin_worker",
    "release_triple",
    "resolve_topology",
    "run_kernel",
    "run_matrix",
    "saturation_point",
    "validate",
]

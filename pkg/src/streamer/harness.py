"""Benchmark orchestration: configurations, preset matrices, and execution.

A configuration pins down one placement (mode and memory node), one compute
restriction, one affinity policy, and a thread sweep.  The harness runs each
point with an untimed warm-up cycle followed by timed cycles in fixed kernel
order, checks the arrays afterwards, and turns timings into report rows.
Failures are recorded per configuration so one broken point cannot take down
a matrix.
"""

from __future__ import annotations

import datetime
import logging
import platform
from dataclasses import dataclass, field

from .kernels import (
    DEFAULT_NTIMES,
    DEFAULT_SCALAR,
    KERNEL_ORDER,
    KernelKind,
    TimingRecord,
    compute_result,
    init_arrays,
    run_kernel,
    validate,
)
from .placement import (
    PlacementError,
    PlacementMode,
    PlacementSpec,
    allocate_triple,
    default_pool_size,
    release_triple,
)
from .pool import BackingSpec, PoolError
from .report import ReportRow
from .topology import (
    AffinityPolicy,
    TopologyError,
    TopologyMap,
    assign_affinity,
)
from .workers import WorkerTeam, WorkerTeamError

log = logging.getLogger(__name__)

DEFAULT_ARRAY_SIZE = 100_000_000


class ConfigError(Exception):
    """Unusable run configuration."""


@dataclass(frozen=True)
class RunConfig:
    label: str
    placement: PlacementSpec
    compute_nodes: tuple[int, ...] | None = None  # None means every node with cpus
    affinity: AffinityPolicy = field(default_factory=AffinityPolicy.close)
    threads: tuple[int, ...] | None = None  # None sweeps 1..available cpus
    array_size: int = DEFAULT_ARRAY_SIZE
    offset: int = 0
    ntimes: int = DEFAULT_NTIMES
    scalar: float = DEFAULT_SCALAR
    kernels: tuple[KernelKind, ...] = KERNEL_ORDER
    pool_size: int | None = None

    def __post_init__(self):
        if not self.label:
            raise ConfigError("empty label")
        if self.array_size < 1:
            raise ConfigError(f"[{self.label}] array_size must be positive")
        if self.ntimes < 2:
            raise ConfigError(f"[{self.label}] ntimes must be at least 2")
        if self.offset < 0:
            raise ConfigError(f"[{self.label}] offset must be non-negative")
        if not self.kernels:
            raise ConfigError(f"[{self.label}] kernels must not be empty")
        ordered = tuple(k for k in KERNEL_ORDER if k in self.kernels)
        object.__setattr__(self, "kernels", ordered)


@dataclass
class MatrixRun:
    configs: list[RunConfig]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = [c.label for c in self.configs]
        dup = {l for l in labels if labels.count(l) > 1}
        if dup:
            raise ConfigError(f"duplicate label '{sorted(dup)[0]}'")


@dataclass(frozen=True)
class ConfigFailure:
    label: str
    threads: int | None
    error: str


@dataclass
class MatrixResult:
    rows: list[ReportRow]
    failures: list[ConfigFailure]
    metadata: dict

    @property
    def ok(self) -> bool:
        return not self.failures and all(r.validated for r in self.rows)


def build_metadata(topo: TopologyMap) -> dict:
    from .topology import format_descriptor

    return {
        "host": platform.node(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "topology": format_descriptor(topo),
    }


def _capped_size(config: RunConfig, topo: TopologyMap, notices: list[str]) -> int:
    """Shrink the array size when the target node cannot hold the working set.

    The footprint (three arrays, plus the pool around them in pmem mode) is
    kept under half the node's memory.  Unknown node sizes are left alone.
    """
    node = topo.node(config.placement.mem_node)
    if node.mem_bytes <= 0:
        return config.array_size
    budget = node.mem_bytes // 2
    per_element = 3 * 8
    footprint = per_element * (config.array_size + config.offset)
    if config.placement.mode is PlacementMode.PMEM:
        footprint = config.pool_size or default_pool_size(footprint)
        per_element = 2 * per_element  # pool default is twice the data
    if footprint <= budget:
        return config.array_size
    capped = max(1, budget // per_element - config.offset)
    notices.append(
        f"{config.label}: array size capped to {capped} elements "
        f"to fit node {node.id}"
    )
    return capped


def _run_config(
    config: RunConfig,
    topo: TopologyMap,
    allow_unbound: bool,
    rows: list[ReportRow],
    failures: list[ConfigFailure],
    notices: list[str],
) -> None:
    compute = topo.restrict(config.compute_nodes) if config.compute_nodes is not None \
        else TopologyMap(topo.nodes_with_cpus())
    total_cpus = compute.total_cpus()
    if total_cpus == 0:
        raise ConfigError(f"[{config.label}] compute nodes have no cpus")
    thread_counts = config.threads or tuple(range(1, total_cpus + 1))
    n = _capped_size(config, topo, notices)

    with WorkerTeam(max(thread_counts)) as team:
        for nthreads in thread_counts:
            cpus = assign_affinity(compute, config.affinity, nthreads)
            team.set_affinity(cpus)
            triple = allocate_triple(
                config.placement,
                n,
                config.offset,
                pool_size=config.pool_size,
                topo=topo,
                allow_unbound=allow_unbound,
            )
            try:
                if triple.backend is not None and triple.backend.unbound:
                    notices.append(f"{config.label}: arrays are not node-bound")
                init_arrays(triple, team)
                for kind in config.kernels:  # warm-up cycle, untimed
                    run_kernel(kind, triple, config.scalar, team)
                times: dict[KernelKind, list[float]] = {k: [] for k in config.kernels}
                for _ in range(config.ntimes):
                    for kind in config.kernels:
                        times[kind].append(run_kernel(kind, triple, config.scalar, team))
                ok = validate(
                    triple,
                    config.ntimes + 1,
                    config.scalar,
                    kernels=config.kernels,
                )
                if not ok:
                    failures.append(
                        ConfigFailure(config.label, nthreads, "validation failed")
                    )
                for kind in config.kernels:
                    result = compute_result(
                        TimingRecord(kind, tuple(times[kind])),
                        n,
                        threads=nthreads,
                        validated=ok,
                    )
                    rows.append(
                        ReportRow(
                            label=config.label,
                            kernel=kind.label,
                            threads=nthreads,
                            affinity=config.affinity.name,
                            mode=config.placement.mode.value,
                            mem_node=config.placement.mem_node,
                            best_rate_gbps=result.best_rate_mbps / 1000.0,
                            avg_time_s=result.avg_time_s,
                            min_time_s=result.min_time_s,
                            max_time_s=result.max_time_s,
                            validated=ok,
                            unpinned=team.unpinned,
                        )
                    )
            finally:
                release_triple(triple)


def run_matrix(
    matrix: MatrixRun,
    topo: TopologyMap,
    fail_fast: bool = False,
    allow_unbound: bool = False,
) -> MatrixResult:
    """Execute every configuration, collecting rows, failures, and notices."""
    rows: list[ReportRow] = []
    failures: list[ConfigFailure] = []
    notices: list[str] = []
    for config in matrix.configs:
        try:
            _run_config(config, topo, allow_unbound, rows, failures, notices)
        except (
            ConfigError,
            PlacementError,
            PoolError,
            TopologyError,
            WorkerTeamError,
            ValueError,
            OSError,
        ) as exc:
            failures.append(ConfigFailure(config.label, None, str(exc)))
            log.warning("%s failed: %s", config.label, exc)
            if fail_fast:
                break
    metadata = dict(matrix.metadata) or build_metadata(topo)
    if notices:
        metadata["notices"] = notices
    return MatrixResult(rows=rows, failures=failures, metadata=metadata)


# -- preset matrices ----------------------------------------------------------

PRESET_NAMES = (
    "class1a",
    "class1b",
    "class1c-close",
    "class1c-spread",
    "class2a",
    "class2b",
    "all",
)


def expand_class_presets(
    topo: TopologyMap,
    preset: str = "all",
    array_size: int | None = None,
    ntimes: int | None = None,
    threads: tuple[int, ...] | None = None,
) -> tuple[list[RunConfig], list[str]]:
    """Build the measurement classes the suite is organized around.

    1.a  pool on the compute node (local direct access)
    1.b  compute on node 0, pool on every other node (remote direct access)
    1.c  all cores against each node's pool, close and spread orders
    2.a  compute on node 0, bound arrays on every other node (remote expansion)
    2.b  all cores against bound arrays on each node

    Groups whose node requirements the topology cannot meet are skipped with
    a notice rather than an error.
    """
    if preset not in PRESET_NAMES:
        raise ConfigError(f"unknown preset '{preset}'")
    overrides = {}
    if array_size is not None:
        overrides["array_size"] = array_size
    if ntimes is not None:
        overrides["ntimes"] = ntimes
    if threads is not None:
        overrides["threads"] = threads

    compute_nodes = topo.nodes_with_cpus()
    remote = [n for n in topo.nodes if n.id != 0]
    node0_has_cpus = topo.has_node(0) and bool(topo.node(0).cpus)
    configs: list[RunConfig] = []
    notices: list[str] = []

    def add(label: str, **kwargs) -> None:
        configs.append(RunConfig(label=label, **kwargs, **overrides))

    def pmem(node_id: int) -> PlacementSpec:
        return PlacementSpec(PlacementMode.PMEM, node_id)

    def numa(node_id: int) -> PlacementSpec:
        return PlacementSpec(PlacementMode.NUMA, node_id)

    for node in compute_nodes:
        add(f"class1a-pmem{node.id}", placement=pmem(node.id), compute_nodes=(node.id,))
    if remote and node0_has_cpus:
        for node in remote:
            add(f"class1b-pmem{node.id}", placement=pmem(node.id), compute_nodes=(0,))
    else:
        notices.append("class1b: group skipped: no remote node")
    for node in topo.nodes:
        add(
            f"class1c-close-pmem{node.id}",
            placement=pmem(node.id),
            affinity=AffinityPolicy.close(),
        )
        add(
            f"class1c-spread-pmem{node.id}",
            placement=pmem(node.id),
            affinity=AffinityPolicy.spread(),
        )
    if remote and node0_has_cpus:
        for node in remote:
            add(f"class2a-numa{node.id}", placement=numa(node.id), compute_nodes=(0,))
    else:
        notices.append("class2a: group skipped: no remote node")
    for node in topo.nodes:
        add(f"class2b-numa{node.id}", placement=numa(node.id))

    if preset != "all":
        configs = [c for c in configs if c.label.startswith(preset)]
        notices = [m for m in notices if m.startswith(preset.split("-")[0])]
        if not configs and not notices:
            notices.append(f"{preset}: group skipped: no matching node")
    return configs, notices


# -- configuration files -------------------------------------------------------

_CONFIG_KEYS = (
    "mode",
    "mem_node",
    "compute_nodes",
    "affinity",
    "threads",
    "array_size",
    "ntimes",
    "scalar",
    "kernels",
    "pool_path",
    "pool_size",
)


def _parse_int(label: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{label}] {key} must be an integer, got '{value}'") from None


def _parse_int_list(label: str, key: str, value: str) -> tuple[int, ...]:
    return tuple(_parse_int(label, key, part.strip()) for part in value.split(","))


def _build_config(label: str, fields: dict[str, str]) -> RunConfig:
    if "mode" not in fields:
        raise ConfigError(f"[{label}] missing required key 'mode'")
    if "mem_node" not in fields:
        raise ConfigError(f"[{label}] missing required key 'mem_node'")
    try:
        mode = PlacementMode(fields["mode"].lower())
    except ValueError:
        raise ConfigError(f"[{label}] unknown mode '{fields['mode']}'") from None
    mem_node = _parse_int(label, "mem_node", fields["mem_node"])

    backing = None
    if "pool_path" in fields:
        if mode is not PlacementMode.PMEM:
            raise ConfigError(f"[{label}] pool_path requires pmem mode")
        backing = BackingSpec.file(fields["pool_path"])
    pool_size = None
    if "pool_size" in fields:
        if mode is not PlacementMode.PMEM:
            raise ConfigError(f"[{label}] pool_size requires pmem mode")
        pool_size = _parse_int(label, "pool_size", fields["pool_size"])

    kwargs: dict = {}
    if "compute_nodes" in fields:
        value = fields["compute_nodes"].strip()
        kwargs["compute_nodes"] = None if value == "all" else _parse_int_list(
            label, "compute_nodes", value
        )
    if "affinity" in fields:
        try:
            kwargs["affinity"] = AffinityPolicy.from_name(fields["affinity"])
        except ValueError as exc:
            raise ConfigError(f"[{label}] {exc}") from None
    if "threads" in fields:
        kwargs["threads"] = _parse_int_list(label, "threads", fields["threads"])
    if "array_size" in fields:
        kwargs["array_size"] = _parse_int(label, "array_size", fields["array_size"])
    if "ntimes" in fields:
        kwargs["ntimes"] = _parse_int(label, "ntimes", fields["ntimes"])
    if "scalar" in fields:
        try:
            kwargs["scalar"] = float(fields["scalar"])
        except ValueError:
            raise ConfigError(f"[{label}] scalar must be a number") from None
    if "kernels" in fields:
        try:
            kwargs["kernels"] = tuple(
                KernelKind.from_name(part) for part in fields["kernels"].split(",")
            )
        except ValueError as exc:
            raise ConfigError(f"[{label}] {exc}") from None

    try:
        placement = PlacementSpec(mode, mem_node, backing)
    except ValueError as exc:
        raise ConfigError(f"[{label}] {exc}") from None
    return RunConfig(label=label, placement=placement, pool_size=pool_size, **kwargs)


def parse_config_text(text: str) -> list[RunConfig]:
    """Parse the [label] / key = value run-configuration format."""
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    label = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            label = line[1:-1].strip()
            if not label:
                raise ConfigError(f"line {lineno}: empty section label")
            if any(l == label for l, _ in sections):
                raise ConfigError(f"line {lineno}: duplicate label '{label}'")
            current = {}
            sections.append((label, current))
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [label] section")
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"[{label}] unknown key '{key}'")
        if key in current:
            raise ConfigError(f"[{label}] duplicate key '{key}'")
        current[key] = value
    if not sections:
        raise ConfigError("configuration has no sections")
    return [_build_config(lbl, fields) for lbl, fields in sections]


def load_config(path) -> list[RunConfig]:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def format_config(configs: list[RunConfig]) -> str:
    """Inverse of parse_config_text for the values a RunConfig carries."""
    blocks = []
    for c in configs:
        lines = [f"[{c.label}]"]
        lines.append(f"mode = {c.placement.mode.value}")
        lines.append(f"mem_node = {c.placement.mem_node}")
        if c.compute_nodes is None:
            lines.append("compute_nodes = all")
        else:
            lines.append("compute_nodes = " + ",".join(str(i) for i in c.compute_nodes))
        lines.append(f"affinity = {c.affinity.name}")
        if c.threads is not None:
            lines.append("threads = " + ",".join(str(t) for t in c.threads))
        lines.append(f"array_size = {c.array_size}")
        lines.append(f"ntimes = {c.ntimes}")
        lines.append(f"scalar = {c.scalar}")
        if c.kernels != KERNEL_ORDER:
            lines.append("kernels = " + ",".join(k.label for k in c.kernels))
        if c.placement.backing is not None and c.placement.backing.path is not None:
            lines.append(f"pool_path = {c.placement.backing.path}")
        if c.pool_size is not None:
            lines.append(f"pool_size = {c.pool_size}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"

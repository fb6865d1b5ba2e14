"""Memory topology discovery, descriptor files, and thread-to-cpu assignment.

Topology comes from /sys on Linux, from a descriptor file for emulated or
recorded layouts, or from the STREAMER_TOPOLOGY environment variable.  Nodes
without cpus model memory reachable only over a link (far memory); they can
hold arrays but contribute no compute.
"""

from __future__ import annotations

import enum
import glob
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

TOPOLOGY_ENV = "STREAMER_TOPOLOGY"


class TopologyError(Exception):
    """Malformed descriptor or inconsistent node data."""


class NodeKind(enum.Enum):
    ONNODE = "onnode"
    CXL_ATTACHED = "cxl"


class AffinityKind(enum.Enum):
    CLOSE = "close"
    SPREAD = "spread"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class MemNode:
    id: int
    cpus: tuple[int, ...]
    mem_bytes: int
    kind: NodeKind

    def __post_init__(self):
        if self.id < 0:
            raise TopologyError(f"negative node id {self.id}")
        if self.mem_bytes < 0:
            raise TopologyError(f"node {self.id}: negative memory size")
        if self.kind is NodeKind.CXL_ATTACHED and self.cpus:
            raise TopologyError(f"node {self.id}: cxl nodes cannot have cpus")


@dataclass(frozen=True)
class TopologyMap:
    nodes: tuple[MemNode, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        seen: set[int] = set()
        for n in self.nodes:
            dup = seen.intersection(n.cpus)
            if dup:
                raise TopologyError(f"cpu {min(dup)} appears on multiple nodes")
            seen.update(n.cpus)
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))

    def node(self, node_id: int) -> MemNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise TopologyError(f"no such node {node_id}")

    def has_node(self, node_id: int) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def nodes_with_cpus(self) -> tuple[MemNode, ...]:
        return tuple(n for n in self.nodes if n.cpus)

    def total_cpus(self) -> int:
        return sum(len(n.cpus) for n in self.nodes)

    def restrict(self, node_ids) -> "TopologyMap":
        """Sub-topology with only the named nodes (for compute restriction)."""
        wanted = set(node_ids)
        missing = wanted - {n.id for n in self.nodes}
        if missing:
            raise TopologyError(f"no such node {min(missing)}")
        return TopologyMap(tuple(n for n in self.nodes if n.id in wanted))


@dataclass(frozen=True)
class AffinityPolicy:
    kind: AffinityKind
    explicit_cpus: tuple[int, ...] | None = None

    @classmethod
    def close(cls) -> "AffinityPolicy":
        return cls(AffinityKind.CLOSE)

    @classmethod
    def spread(cls) -> "AffinityPolicy":
        return cls(AffinityKind.SPREAD)

    @classmethod
    def explicit(cls, cpus) -> "AffinityPolicy":
        return cls(AffinityKind.EXPLICIT, tuple(cpus))

    @classmethod
    def from_name(cls, name: str) -> "AffinityPolicy":
        try:
            kind = AffinityKind(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown affinity '{name}'") from None
        if kind is AffinityKind.EXPLICIT:
            raise ValueError("explicit affinity needs a cpu list")
        return cls(kind)

    @property
    def name(self) -> str:
        return self.kind.value


def parse_cpu_list(text: str) -> tuple[int, ...]:
    """Parse the kernel cpulist format: '0-3,8,10-11'. Empty means no cpus."""
    text = text.strip()
    if not text:
        return ()
    cpus: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, _, hi = part.partition("-")
            cpus.extend(range(int(lo), int(hi) + 1))
        else:
            cpus.append(int(part))
    return tuple(cpus)


def _read(path: str) -> str | None:
    try:
        with open(path) as f:
            return f.read().strip()
    except OSError:
        return None


def _physical_filter(cpus: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split cpus into (physical, smt_siblings) via sibling lists in /sys.

    A cpu counts as physical when it is the lowest id among its hyperthread
    siblings.  Missing sibling files mean no SMT, so everything is physical.
    """
    physical, smt = [], []
    for cpu in cpus:
        base = f"/sys/devices/system/cpu/cpu{cpu}/topology"
        text = _read(f"{base}/thread_siblings_list") or _read(f"{base}/core_cpus_list")
        if text is None:
            physical.append(cpu)
            continue
        siblings = parse_cpu_list(text)
        if not siblings or cpu == min(siblings):
            physical.append(cpu)
        else:
            smt.append(cpu)
    return tuple(physical), tuple(smt)


def detect_topology(include_smt: bool = False) -> TopologyMap:
    """Read node layout from /sys.  Hosts without node entries become one node.

    Hyperthread siblings are excluded by default; include_smt appends them
    after the physical cpus of their node, so low thread counts land on
    distinct cores either way.
    """
    node_dirs = sorted(glob.glob("/sys/devices/system/node/node[0-9]*"))
    if not node_dirs:
        cpus = tuple(sorted(os.sched_getaffinity(0))) if hasattr(os, "sched_getaffinity") \
            else tuple(range(os.cpu_count() or 1))
        return TopologyMap((MemNode(0, cpus, 0, NodeKind.ONNODE),))

    nodes = []
    for d in node_dirs:
        node_id = int(re.search(r"node(\d+)$", d).group(1))
        cpus = parse_cpu_list(_read(f"{d}/cpulist") or "")
        physical, smt = _physical_filter(cpus)
        picked = physical + smt if include_smt else physical
        mem_bytes = 0
        meminfo = _read(f"{d}/meminfo")
        if meminfo:
            m = re.search(r"MemTotal:\s+(\d+)\s*kB", meminfo)
            if m:
                mem_bytes = int(m.group(1)) * 1024
        kind = NodeKind.ONNODE if picked else NodeKind.CXL_ATTACHED
        nodes.append(MemNode(node_id, picked, mem_bytes, kind))
    return TopologyMap(tuple(nodes))


_DESCRIPTOR_KEYS = ("kind", "cpus", "mem_gb")


def parse_descriptor(text: str) -> TopologyMap:
    """Parse the one-node-per-line descriptor format.

    Each line is 'node <id> kind=<onnode|cxl> cpus=<comma list or none>
    mem_gb=<number>'.  Blank lines and '#' comments are ignored.
    """
    nodes = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] != "node" or len(tokens) < 2:
            raise TopologyError(f"line {lineno}: expected 'node <id> ...'")
        try:
            node_id = int(tokens[1])
        except ValueError:
            raise TopologyError(f"line {lineno}: bad node id '{tokens[1]}'") from None
        fields: dict[str, str] = {}
        for tok in tokens[2:]:
            key, sep, value = tok.partition("=")
            if not sep or key not in _DESCRIPTOR_KEYS:
                raise TopologyError(f"line {lineno}: unknown field '{tok}'")
            if key in fields:
                raise TopologyError(f"line {lineno}: duplicate field '{key}'")
            fields[key] = value
        missing = [k for k in _DESCRIPTOR_KEYS if k not in fields]
        if missing:
            raise TopologyError(f"line {lineno}: missing field '{missing[0]}'")
        try:
            kind = NodeKind(fields["kind"])
        except ValueError:
            raise TopologyError(f"line {lineno}: unknown kind '{fields['kind']}'") from None
        cpus = () if fields["cpus"] == "none" else parse_cpu_list(fields["cpus"])
        try:
            mem_bytes = int(float(fields["mem_gb"]) * 1e9)
        except ValueError:
            raise TopologyError(f"line {lineno}: bad mem_gb '{fields['mem_gb']}'") from None
        nodes.append(MemNode(node_id, cpus, mem_bytes, kind))
    if not nodes:
        raise TopologyError("descriptor has no node lines")
    return TopologyMap(tuple(nodes))


def format_descriptor(topo: TopologyMap) -> str:
    """Inverse of parse_descriptor, canonical field order, GB = 10^9 bytes."""
    lines = []
    for n in topo.nodes:
        cpus = ",".join(str(c) for c in n.cpus) if n.cpus else "none"
        mem_gb = n.mem_bytes / 1e9
        lines.append(f"node {n.id} kind={n.kind.value} cpus={cpus} mem_gb={mem_gb:g}")
    return "\n".join(lines) + "\n"


def load_descriptor(path: str | Path) -> TopologyMap:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TopologyError(f"cannot read descriptor {path}: {exc}") from exc
    return parse_descriptor(text)


def resolve_topology(path: str | Path | None = None, include_smt: bool = False) -> TopologyMap:
    """Descriptor path if given, else STREAMER_TOPOLOGY, else live detection."""
    if path is not None:
        return load_descriptor(path)
    env = os.environ.get(TOPOLOGY_ENV)
    if env:
        return load_descriptor(env)
    return detect_topology(include_smt=include_smt)


def assign_affinity(topo: TopologyMap, policy: AffinityPolicy, nthreads: int) -> list[int]:
    """Pick the cpu for each of nthreads workers under the given policy.

    Close fills node after node in ascending node id; spread hands cpus out
    round-robin across the nodes that have any.  Nodes without cpus are
    skipped.  Asking for more threads than cpus is refused rather than
    doubling up.
    """
    if nthreads < 1:
        raise ValueError("nthreads must be at least 1")
    pools = [list(n.cpus) for n in topo.nodes_with_cpus()]
    total = sum(len(p) for p in pools)
    if nthreads > total:
        raise ValueError("oversubscription unsupported")

    if policy.kind is AffinityKind.EXPLICIT:
        cpus = policy.explicit_cpus or ()
        known = {c for p in pools for c in p}
        bad = [c for c in cpus if c not in known]
        if bad:
            raise ValueError(f"explicit cpu {bad[0]} not in topology")
        if nthreads > len(cpus):
            raise ValueError("oversubscription unsupported")
        return list(cpus[:nthreads])

    if policy.kind is AffinityKind.CLOSE:
        flat = [c for p in pools for c in p]
        return flat[:nthreads]

    # spread: one cpu per node in turn, ascending node id
    out: list[int] = []
    position = 0
    while len(out) < nthreads:
        progressed = False
        for p in pools:
            if position < len(p):
                out.append(p[position])
                progressed = True
                if len(out) == nthreads:
                    break
        if not progressed:
            break
        position += 1
    return out


_pin_warned = False


def pin_worker(cpu: int) -> bool:
    """Pin the calling thread to one cpu.

    Returns False (with a one-time warning) when the platform refuses
    pinning; raises ValueError for a cpu id the host does not have.
    """
    global _pin_warned
    if not hasattr(os, "sched_setaffinity"):
        if not _pin_warned:
            log.warning("thread pinning unavailable on this platform, running unpinned")
            _pin_warned = True
        return False
    try:
        os.sched_setaffinity(0, {cpu})
        return True
    except PermissionError:
        if not _pin_warned:
            log.warning("thread pinning refused by the platform, running unpinned")
            _pin_warned = True
        return False
    except OSError as exc:
        raise ValueError(f"cannot pin to cpu {cpu}: {exc}") from exc

"""Result rows, the CSV/JSON output schema, and derived bandwidth metrics.

Rates are GB/s with GB = 10^9 bytes, printed to 6 significant digits; times
are seconds printed to 9 decimal places.  The CSV column set is the contract
consumed by external plotting, so it never changes shape.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

CSV_COLUMNS = (
    "label",
    "kernel",
    "threads",
    "affinity",
    "mode",
    "mem_node",
    "best_rate_gbps",
    "avg_time_s",
    "min_time_s",
    "max_time_s",
    "validated",
    "unpinned",
)
CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class ReportRow:
    label: str
    kernel: str
    threads: int
    affinity: str
    mode: str
    mem_node: int
    best_rate_gbps: float
    avg_time_s: float
    min_time_s: float
    max_time_s: float
    validated: bool
    unpinned: bool


@dataclass(frozen=True)
class DerivedMetrics:
    """Optional summary metrics attached to a JSON report."""

    degradation_pct: float | None = None
    fabric_overhead_gbps: float | None = None
    mode_overhead_pct: float | None = None
    saturation_threads: int | None = None
    saturation_gbps: float | None = None


# -- metric arithmetic -------------------------------------------------------


def degradation_pct(baseline_gbps: float, candidate_gbps: float) -> float:
    """Percent bandwidth lost moving from baseline to candidate."""
    if baseline_gbps <= 0:
        raise ValueError("baseline rate must be positive")
    return 100.0 * (1.0 - candidate_gbps / baseline_gbps)


def fabric_overhead(
    emulated_remote_gbps: float,
    cxl_gbps: float,
    generation_ratio: float = 0.5,
) -> float:
    """Bandwidth attributable to the fabric rather than the memory generation.

    The emulated remote figure is scaled by the DRAM generation ratio before
    subtracting the measured device rate, so slower media is not mistaken for
    link cost.
    """
    if generation_ratio <= 0:
        raise ValueError("generation ratio must be positive")
    return emulated_remote_gbps * generation_ratio - cxl_gbps


def mode_overhead_pct(numa_gbps: float, pmem_gbps: float) -> float:
    """Percent cost of the transactional-pool path over plain bound memory."""
    if numa_gbps <= 0:
        raise ValueError("numa rate must be positive")
    return 100.0 * (1.0 - pmem_gbps / numa_gbps)


def mode_overhead_rows(numa_row: ReportRow, pmem_row: ReportRow) -> float:
    """mode_overhead_pct over two rows that describe the same measurement point."""
    for key in ("kernel", "threads", "mem_node"):
        if getattr(numa_row, key) != getattr(pmem_row, key):
            raise ValueError(
                f"mismatched rows for mode overhead: {key} differs "
                f"({getattr(numa_row, key)} vs {getattr(pmem_row, key)})"
            )
    return mode_overhead_pct(numa_row.best_rate_gbps, pmem_row.best_rate_gbps)


def saturation_point(
    curve: list[tuple[int, float]],
    tolerance: float = 0.05,
) -> tuple[int, float]:
    """Smallest thread count whose rate is within tolerance of the curve's peak.

    The curve is (threads, gbps) sorted by ascending threads.
    """
    if not curve:
        raise ValueError("saturation curve is empty")
    if not 0 <= tolerance < 1:
        raise ValueError("tolerance must be in [0, 1)")
    threads = [t for t, _ in curve]
    if threads != sorted(threads) or len(set(threads)) != len(threads):
        raise ValueError("curve must be sorted by distinct thread counts")
    peak = max(g for _, g in curve)
    for t, g in curve:
        if g >= (1.0 - tolerance) * peak:
            return t, g
    raise AssertionError("unreachable: peak is always within tolerance of itself")


# -- serialization -----------------------------------------------------------


def _format_row(row: ReportRow) -> str:
    return ",".join(
        (
            row.label,
            row.kernel,
            str(row.threads),
            row.affinity,
            row.mode,
            str(row.mem_node),
            format(row.best_rate_gbps, ".6g"),
            format(row.avg_time_s, ".9f"),
            format(row.min_time_s, ".9f"),
            format(row.max_time_s, ".9f"),
            "true" if row.validated else "false",
            "true" if row.unpinned else "false",
        )
    )


def emit_csv(rows: list[ReportRow]) -> str:
    """Schema-stable CSV text; rows with validated=false are emitted, not dropped."""
    lines = [CSV_HEADER]
    lines.extend(_format_row(r) for r in rows)
    return "\n".join(lines) + "\n"


def emit_json(
    rows: list[ReportRow],
    metadata: dict | None = None,
    derived: DerivedMetrics | None = None,
) -> str:
    doc = {
        "metadata": metadata or {},
        "rows": [asdict(r) for r in rows],
        "derived": asdict(derived) if derived is not None else {},
    }
    return json.dumps(doc, indent=2) + "\n"


def emit(
    rows: list[ReportRow],
    fmt: str = "csv",
    metadata: dict | None = None,
    derived: DerivedMetrics | None = None,
) -> str:
    if fmt == "csv":
        return emit_csv(rows)
    if fmt == "json":
        return emit_json(rows, metadata, derived)
    raise ValueError(f"unknown format '{fmt}'")


def _parse_bool(text: str, lineno: int) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"line {lineno}: expected true or false, got '{text}'")


def parse_csv(text: str) -> list[ReportRow]:
    """Parse emit_csv output (or anything matching the schema) back into rows."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unexpected csv header")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
        rows.append(
            ReportRow(
                label=parts[0],
                kernel=parts[1],
                threads=int(parts[2]),
                affinity=parts[3],
                mode=parts[4],
                mem_node=int(parts[5]),
                best_rate_gbps=float(parts[6]),
                avg_time_s=float(parts[7]),
                min_time_s=float(parts[8]),
                max_time_s=float(parts[9]),
                validated=_parse_bool(parts[10], lineno),
                unpinned=_parse_bool(parts[11], lineno),
            )
        )
    return rows


def parse_json(text: str) -> tuple[list[ReportRow], dict, dict]:
    doc = json.loads(text)
    rows = [ReportRow(**r) for r in doc.get("rows", [])]
    return rows, doc.get("metadata", {}), doc.get("derived", {})


def load_results(path) -> list[ReportRow]:
    """Read rows from a results file, sniffing CSV versus JSON."""
    with open(path) as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        return parse_json(text)[0]
    return parse_csv(text)


# -- row queries used by the metric commands ---------------------------------


def labels_in(rows: list[ReportRow]) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r.label not in seen:
            seen.append(r.label)
    return seen


def kernels_in(rows: list[ReportRow], label: str) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r.label == label and r.kernel not in seen:
            seen.append(r.kernel)
    return seen


def peak_rate(rows: list[ReportRow], label: str, kernel: str) -> float | None:
    rates = [r.best_rate_gbps for r in rows if r.label == label and r.kernel == kernel]
    return max(rates) if rates else None


def thread_curve(rows: list[ReportRow], label: str, kernel: str) -> list[tuple[int, float]]:
    """Best rate per thread count for one label and kernel, sorted by threads."""
    best: dict[int, float] = {}
    for r in rows:
        if r.label == label and r.kernel == kernel:
            best[r.threads] = max(best.get(r.threads, 0.0), r.best_rate_gbps)
    return sorted(best.items())

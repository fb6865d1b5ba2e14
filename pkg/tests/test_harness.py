"""Configuration parsing, preset expansion, and matrix orchestration."""

import pytest

import streamer.harness as harness
from streamer.harness import (
    ConfigError,
    MatrixRun,
    RunConfig,
    expand_class_presets,
    format_config,
    parse_config_text,
    run_matrix,
)
from streamer.kernels import KERNEL_ORDER, KernelKind
from streamer.placement import PlacementMode, PlacementSpec
from streamer.topology import parse_descriptor

ONE_NODE = parse_descriptor("node 0 kind=onnode cpus=0-1 mem_gb=4\n")
TWO_NODE = parse_descriptor(
    "node 0 kind=onnode cpus=0-1 mem_gb=4\n"
    "node 1 kind=onnode cpus=2-3 mem_gb=4\n"
)
CXL_NODE = parse_descriptor(
    "node 0 kind=onnode cpus=0-1 mem_gb=4\n"
    "node 1 kind=cxl cpus=none mem_gb=4\n"
)


def desk_config(label="desk", mode=PlacementMode.NUMA, **kwargs):
    defaults = dict(
        array_size=20_000,
        ntimes=2,
        threads=(1,),
    )
    defaults.update(kwargs)
    return RunConfig(label=label, placement=PlacementSpec(mode, 0), **defaults)


# -- config files ------------------------------------------------------------------


FULL_CONFIG = """\
# comparison pair at desk scale
[near-pmem]
mode = pmem
mem_node = 0
compute_nodes = 0
affinity = close
threads = 1,2
array_size = 4096
ntimes = 3
scalar = 2.5
kernels = Copy,Triad

[far-numa]
mode = numa
mem_node = 1
compute_nodes = all
affinity = spread
array_size = 8192
ntimes = 4
"""


def test_parse_full_config():
    configs = parse_config_text(FULL_CONFIG)
    assert [c.label for c in configs] == ["near-pmem", "far-numa"]
    near = configs[0]
    assert near.placement.mode is PlacementMode.PMEM
    assert near.placement.mem_node == 0
    assert near.compute_nodes == (0,)
    assert near.affinity.name == "close"
    assert near.threads == (1, 2)
    assert near.array_size == 4096
    assert near.ntimes == 3
    assert near.scalar == 2.5
    assert near.kernels == (KernelKind.COPY, KernelKind.TRIAD)
    far = configs[1]
    assert far.compute_nodes is None
    assert far.threads is None
    assert far.kernels == KERNEL_ORDER
    assert far.scalar == 3.0


def test_kernels_are_reordered_canonically():
    configs = parse_config_text(
        "[x]\nmode = numa\nmem_node = 0\nkernels = Triad,Copy\n"
    )
    assert configs[0].kernels == (KernelKind.COPY, KernelKind.TRIAD)


@pytest.mark.parametrize(
    "text,match",
    [
        ("[x]\nmode = numa\nmem_node = 0\nfoo = 1\n", r"\[x\] unknown key 'foo'"),
        ("[x]\nmem_node = 0\n", "missing required key 'mode'"),
        ("[x]\nmode = numa\n", "missing required key 'mem_node'"),
        ("[x]\nmode = fast\nmem_node = 0\n", "unknown mode 'fast'"),
        ("[x]\nmode = numa\nmem_node = zero\n", "mem_node must be an integer"),
        ("[x]\nmode = numa\nmem_node = 0\nthreads = 1,two\n", "threads must be an integer"),
        ("[x]\nmode = numa\nmem_node = 0\nscalar = big\n", "scalar must be a number"),
        ("[x]\nmode = numa\nmem_node = 0\nkernels = Copy,Sum\n", "unknown kernel 'Sum'"),
        ("[x]\nmode = numa\nmem_node = 0\naffinity = near\n", "unknown affinity"),
        ("[x]\nmode = numa\nmem_node = 0\npool_path = /tmp/p\n", "pool_path requires pmem"),
        ("[x]\nmode = numa\nmem_node = 0\npool_size = 99\n", "pool_size requires pmem"),
        ("[x]\nmode = numa\nmem_node = 0\nntimes = 1\n", "ntimes must be at least 2"),
        ("[x]\nmode = numa\nmem_node = 0\narray_size = 0\n", "array_size must be positive"),
        ("[x]\nmode = numa\nmem_node = 0\nmode = pmem\n", "duplicate key 'mode'"),
        ("[x]\nmode = numa\nmem_node = 0\n[x]\nmode = numa\nmem_node = 0\n", "duplicate label"),
        ("mode = numa\n", "outside any"),
        ("[x]\njust words\n", "expected key = value"),
        ("[]\nmode = numa\n", "empty section label"),
        ("# only a comment\n", "no sections"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_config_roundtrip_through_formatter(tmp_path):
    configs = parse_config_text(FULL_CONFIG)
    assert parse_config_text(format_config(configs)) == configs
    pool = parse_config_text(
        "[p]\nmode = pmem\nmem_node = 0\npool_path = /tmp/x.pool\npool_size = 2097152\n"
    )
    assert parse_config_text(format_config(pool)) == pool


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        harness.load_config(tmp_path / "nope.cfg")


# -- presets --------------------------------------------------------------------------


def test_presets_two_node_labels():
    configs, notices = expand_class_presets(TWO_NODE)
    labels = {c.label for c in configs}
    assert labels == {
        "class1a-pmem0", "class1a-pmem1",
        "class1b-pmem1",
        "class1c-close-pmem0", "class1c-close-pmem1",
        "class1c-spread-pmem0", "class1c-spread-pmem1",
        "class2a-numa1",
        "class2b-numa0", "class2b-numa1",
    }
    assert notices == []
    by_label = {c.label: c for c in configs}
    assert by_label["class1b-pmem1"].compute_nodes == (0,)
    assert by_label["class1b-pmem1"].placement.mem_node == 1
    assert by_label["class1c-spread-pmem0"].affinity.name == "spread"
    assert by_label["class2b-numa1"].compute_nodes is None


def test_presets_single_node_skips_remote_groups():
    configs, notices = expand_class_presets(ONE_NODE)
    labels = {c.label for c in configs}
    assert not any(l.startswith(("class1b", "class2a")) for l in labels)
    assert "class1b: group skipped: no remote node" in notices
    assert "class2a: group skipped: no remote node" in notices


def test_presets_cxl_node_is_memory_target_only():
    configs, _ = expand_class_presets(CXL_NODE)
    labels = {c.label for c in configs}
    assert "class1b-pmem1" in labels  # remote direct access against the expander
    assert "class2a-numa1" in labels
    assert "class1a-pmem1" not in labels  # it cannot host compute


def test_preset_filter_and_overrides():
    configs, _ = expand_class_presets(
        TWO_NODE, "class1c-close", array_size=999, ntimes=5, threads=(1, 2)
    )
    assert [c.label for c in configs] == ["class1c-close-pmem0", "class1c-close-pmem1"]
    assert all(c.array_size == 999 and c.ntimes == 5 and c.threads == (1, 2) for c in configs)


def test_preset_unknown_name():
    with pytest.raises(ConfigError, match="unknown preset 'class9'"):
        expand_class_presets(ONE_NODE, "class9")


# -- matrix execution ---------------------------------------------------------------


def test_matrix_rejects_duplicate_labels():
    with pytest.raises(ConfigError, match="duplicate label"):
        MatrixRun([desk_config("same"), desk_config("same")])


def test_run_matrix_row_shape_and_order():
    configs = [
        desk_config("numa-side", PlacementMode.NUMA, threads=(1, 2)),
        desk_config("pmem-side", PlacementMode.PMEM, threads=(1, 2)),
    ]
    result = run_matrix(MatrixRun(configs), ONE_NODE)
    assert result.failures == []
    assert result.ok
    assert len(result.rows) == 2 * 2 * 4  # labels x threads x kernels
    for i in range(0, len(result.rows), 4):
        group = result.rows[i:i + 4]
        assert [r.kernel for r in group] == ["Copy", "Scale", "Add", "Triad"]
        assert len({(r.label, r.threads) for r in group}) == 1
    assert all(r.validated for r in result.rows)
    assert all(r.min_time_s <= r.avg_time_s <= r.max_time_s for r in result.rows)


def test_run_matrix_determinism_of_shape():
    configs = [desk_config()]
    first = run_matrix(MatrixRun(configs), ONE_NODE)
    second = run_matrix(MatrixRun(configs), ONE_NODE)
    key = [(r.label, r.kernel, r.threads, r.validated) for r in first.rows]
    assert key == [(r.label, r.kernel, r.threads, r.validated) for r in second.rows]


def test_run_matrix_isolates_failures():
    bad = RunConfig(
        label="bad-node",
        placement=PlacementSpec(PlacementMode.NUMA, 7),
        array_size=1000,
        ntimes=2,
        threads=(1,),
    )
    good = desk_config("good")
    result = run_matrix(MatrixRun([bad, good]), ONE_NODE)
    assert [f.label for f in result.failures] == ["bad-node"]
    assert "no such node" in result.failures[0].error
    assert {r.label for r in result.rows} == {"good"}
    assert not result.ok


def test_run_matrix_fail_fast_stops():
    bad = RunConfig(
        label="bad-node",
        placement=PlacementSpec(PlacementMode.NUMA, 7),
        array_size=1000,
        ntimes=2,
        threads=(1,),
    )
    good = desk_config("good")
    result = run_matrix(MatrixRun([bad, good]), ONE_NODE, fail_fast=True)
    assert result.rows == []
    assert len(result.failures) == 1


def test_run_matrix_records_validation_failure(monkeypatch):
    monkeypatch.setattr(harness, "validate", lambda *a, **k: False)
    result = run_matrix(MatrixRun([desk_config()]), ONE_NODE)
    assert len(result.rows) == 4  # rows are emitted, never dropped
    assert all(not r.validated for r in result.rows)
    assert [f.error for f in result.failures] == ["validation failed"]
    assert not result.ok


def test_run_matrix_caps_array_to_node_memory():
    tiny = parse_descriptor("node 0 kind=onnode cpus=0-1 mem_gb=0.001\n")
    config = desk_config(array_size=1_000_000)
    result = run_matrix(MatrixRun([config]), tiny)
    assert result.failures == []
    notices = result.metadata["notices"]
    assert any("capped" in n for n in notices)
    # budget is half the node: 500_000 bytes over 24 bytes per element
    assert any(str(500_000 // 24) in n for n in notices)


def test_run_matrix_compute_restriction_must_have_cpus():
    config = RunConfig(
        label="onto-cxl",
        placement=PlacementSpec(PlacementMode.NUMA, 0),
        compute_nodes=(1,),
        array_size=1000,
        ntimes=2,
        threads=(1,),
    )
    result = run_matrix(MatrixRun([config]), CXL_NODE)
    assert len(result.failures) == 1
    assert "no cpus" in result.failures[0].error


def test_run_matrix_oversubscribed_threads_recorded():
    config = desk_config(threads=(1, 64))
    result = run_matrix(MatrixRun([config]), ONE_NODE)
    assert any("oversubscription unsupported" in f.error for f in result.failures)


def test_run_matrix_kernel_subset_rows():
    config = desk_config(kernels=(KernelKind.TRIAD, KernelKind.COPY))
    result = run_matrix(MatrixRun([config]), ONE_NODE)
    assert result.ok
    assert [r.kernel for r in result.rows] == ["Copy", "Triad"]


def test_metadata_contains_topology_snapshot():
    result = run_matrix(MatrixRun([desk_config()]), ONE_NODE)
    assert "node 0 kind=onnode" in result.metadata["topology"]
    assert "timestamp" in result.metadata

"""End-to-end command-line behavior: exit codes, stream separation, schemas."""

import json

import pytest

from streamer import cli, report
from streamer.report import ReportRow
from streamer.topology import parse_descriptor

TWO_NODE = """\
node 0 kind=onnode cpus=0-1 mem_gb=4
node 1 kind=onnode cpus=2-3 mem_gb=4
"""

ONE_NODE = "node 0 kind=onnode cpus=0 mem_gb=1\n"


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write(path, text):
    path.write_text(text)
    return str(path)


# -- topo ---------------------------------------------------------------------


def test_topo_described_file_roundtrips(tmp_path, capsys):
    path = write(tmp_path / "topo.txt", TWO_NODE)
    code, out, err = run_cli(["topo", "--file", path], capsys)
    assert code == 0
    parsed = parse_descriptor(out)
    assert [n.id for n in parsed.nodes] == [0, 1]
    assert parsed.nodes[0].cpus == (0, 1)


def test_topo_json_lists_nodes(tmp_path, capsys):
    path = write(tmp_path / "topo.txt", TWO_NODE)
    code, out, _ = run_cli(["topo", "--file", path, "--json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert [n["id"] for n in doc["nodes"]] == [0, 1]
    assert doc["nodes"][0]["kind"] == "onnode"
    assert doc["nodes"][0]["cpus"] == [0, 1]
    assert doc["nodes"][0]["mem_bytes"] == 4_000_000_000


def test_topo_detects_live_host(capsys):
    code, out, _ = run_cli(["topo"], capsys)
    assert code == 0
    assert parse_descriptor(out).nodes


def test_topo_bad_descriptor_is_usage_error(tmp_path, capsys):
    path = write(tmp_path / "topo.txt", "node zero kind=onnode cpus=0 mem_gb=1\n")
    code, out, err = run_cli(["topo", "--file", path], capsys)
    assert code == 2
    assert out == ""
    assert "error:" in err and "bad node id" in err


# -- presets ------------------------------------------------------------------


def test_presets_emit_loadable_config(tmp_path, capsys):
    path = write(tmp_path / "topo.txt", TWO_NODE)
    code, out, err = run_cli(
        ["presets", "--file", path, "--size", "50000", "--ntimes", "3"], capsys
    )
    assert code == 0
    configs = {c.label: c for c in cli.harness.parse_config_text(out)}
    assert "class1b-pmem1" in configs
    assert configs["class1b-pmem1"].array_size == 50000
    assert configs["class1b-pmem1"].ntimes == 3


def test_presets_skip_notices_go_to_stderr(tmp_path, capsys):
    path = write(tmp_path / "topo.txt", ONE_NODE)
    code, out, err = run_cli(["presets", "--file", path, "--preset", "class1b"], capsys)
    assert code == 0
    assert out == ""
    assert "class1b: group skipped: no remote node" in err


# -- run ----------------------------------------------------------------------


def test_run_requires_config_xor_preset(tmp_path, capsys):
    code, _, err = run_cli(["run"], capsys)
    assert code == 2
    assert "config file or --preset" in err
    path = write(tmp_path / "m.cfg", "[x]\nmode = numa\nmem_node = 0\n")
    code, _, err = run_cli(["run", path, "--preset", "class1a"], capsys)
    assert code == 2


def test_run_config_file_emits_schema_csv(tmp_path, capsys):
    cfg = write(
        tmp_path / "desk.cfg",
        "[desk]\nmode = numa\nmem_node = 0\narray_size = 20000\nntimes = 2\nthreads = 1\n",
    )
    code, out, err = run_cli(["run", cfg], capsys)
    assert code == 0
    rows = report.parse_csv(out)
    assert [r.kernel for r in rows] == ["Copy", "Scale", "Add", "Triad"]
    assert all(r.label == "desk" and r.validated for r in rows)
    assert all(r.best_rate_gbps > 0 for r in rows)


def test_run_pmem_config_creates_pool_file(tmp_path, capsys):
    pool = tmp_path / "store.pool"
    cfg = write(
        tmp_path / "store.cfg",
        "[store]\nmode = pmem\nmem_node = 0\narray_size = 5000\nntimes = 2\n"
        f"threads = 1\npool_path = {pool}\n",
    )
    code, out, _ = run_cli(["run", cfg], capsys)
    assert code == 0
    assert pool.exists()
    rows = report.parse_csv(out)
    assert {r.mode for r in rows} == {"pmem"}
    assert all(r.validated for r in rows)


def test_run_overrides_trim_the_matrix(tmp_path, capsys):
    cfg = write(
        tmp_path / "desk.cfg",
        "[desk]\nmode = numa\nmem_node = 0\narray_size = 90000\nntimes = 4\nthreads = 1\n",
    )
    code, out, _ = run_cli(
        ["run", cfg, "--size", "10000", "--ntimes", "2", "--threads", "1"], capsys
    )
    assert code == 0
    assert len(report.parse_csv(out)) == 4


def test_run_preset_on_empty_group_emits_header_only(tmp_path, capsys):
    topo = write(tmp_path / "topo.txt", ONE_NODE)
    code, out, err = run_cli(
        ["run", "--preset", "class1b", "--topology", topo, "--size", "10000"], capsys
    )
    assert code == 0
    assert out == report.CSV_HEADER + "\n"
    assert "group skipped" in err


def test_run_json_document_shape(tmp_path, capsys):
    cfg = write(
        tmp_path / "desk.cfg",
        "[desk]\nmode = numa\nmem_node = 0\narray_size = 10000\nntimes = 2\nthreads = 1\n",
    )
    code, out, _ = run_cli(["run", cfg, "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"metadata", "rows", "derived"}
    assert len(doc["rows"]) == 4
    assert "topology" in doc["metadata"]


def test_run_out_file_keeps_stdout_clean(tmp_path, capsys):
    cfg = write(
        tmp_path / "desk.cfg",
        "[desk]\nmode = numa\nmem_node = 0\narray_size = 10000\nntimes = 2\nthreads = 1\n",
    )
    dest = tmp_path / "results.csv"
    code, out, _ = run_cli(["run", cfg, "--out", str(dest)], capsys)
    assert code == 0
    assert out == ""
    assert report.parse_csv(dest.read_text())


def test_run_bad_config_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path / "bad.cfg", "[x]\nmode = warp\nmem_node = 0\n")
    code, _, err = run_cli(["run", cfg], capsys)
    assert code == 2
    assert "unknown mode 'warp'" in err


def test_run_bad_thread_list_is_usage_error(capsys):
    code, _, err = run_cli(["run", "--preset", "class1a", "--threads", "1,x"], capsys)
    assert code == 2
    assert "bad thread list" in err


def test_run_failure_reports_and_exits_one(tmp_path, capsys):
    cfg = write(
        tmp_path / "ghost.cfg",
        "[ghost]\nmode = numa\nmem_node = 9\narray_size = 10000\nntimes = 2\nthreads = 1\n",
    )
    code, out, err = run_cli(["run", cfg], capsys)
    assert code == 1
    assert "failure: ghost" in err and "no such node" in err
    assert out == report.CSV_HEADER + "\n"  # schema intact even when empty


# -- selftest -----------------------------------------------------------------


def test_selftest_passes_clean(capsys):
    code, out, err = run_cli(["selftest"], capsys)
    assert code == 0
    assert err == ""
    lines = [ln for ln in out.splitlines() if ln]
    assert len(lines) == 5
    assert all(ln.startswith("ok") for ln in lines)


def test_selftest_detects_injected_fault(capsys):
    code, out, err = run_cli(["selftest", "--inject-fault", "tx-atomicity"], capsys)
    assert code == 1
    assert any(ln.startswith("FAIL tx-atomicity") for ln in out.splitlines())
    assert "selftest failed: tx-atomicity" in err


def test_selftest_unknown_fault_rejected_by_parser(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["selftest", "--inject-fault", "bitflip"])
    assert exc.value.code == 2


def test_selftest_verdicts_are_deterministic():
    from streamer.selftest import run_selftest

    first = [(r.name, r.ok) for r in run_selftest()]
    second = [(r.name, r.ok) for r in run_selftest()]
    assert first == second


# -- report -------------------------------------------------------------------


def metric_row(label, kernel, threads, rate, mode="numa"):
    return ReportRow(
        label=label,
        kernel=kernel,
        threads=threads,
        affinity="close",
        mode=mode,
        mem_node=0,
        best_rate_gbps=rate,
        avg_time_s=0.01,
        min_time_s=0.01,
        max_time_s=0.01,
        validated=True,
        unpinned=False,
    )


@pytest.fixture
def results_file(tmp_path):
    rows = [
        metric_row("near", "Copy", 1, 10.0),
        metric_row("near", "Copy", 2, 20.5),
        metric_row("near", "Copy", 4, 21.0),
        metric_row("near", "Triad", 4, 20.0),
        metric_row("far", "Copy", 4, 15.0),
        metric_row("far", "Triad", 4, 10.0),
        metric_row("pool", "Copy", 4, 8.8, mode="pmem"),
    ]
    path = tmp_path / "results.csv"
    path.write_text(report.emit_csv(rows))
    return str(path)


def test_report_degradation_lines(results_file, capsys):
    code, out, _ = run_cli(
        ["report", "--in", results_file, "--metric", "degradation",
         "--baseline", "near", "--candidate", "far"],
        capsys,
    )
    assert code == 0
    assert "Copy: degradation 28.57% (21 -> 15 GB/s)" in out
    assert "Triad: degradation 50.00% (20 -> 10 GB/s)" in out
    assert "average: 39.2857 %" in out


def test_report_fabric_line(results_file, capsys):
    code, out, _ = run_cli(
        ["report", "--in", results_file, "--metric", "fabric",
         "--baseline", "near", "--candidate", "far", "--generation-ratio", "0.5"],
        capsys,
    )
    assert code == 0
    assert "Copy: fabric overhead -4.5 GB/s" in out  # 21*0.5 - 15


def test_report_mode_overhead_line(results_file, capsys):
    code, out, _ = run_cli(
        ["report", "--in", results_file, "--metric", "mode",
         "--baseline", "near", "--candidate", "pool"],
        capsys,
    )
    assert code == 0
    assert "Copy: mode overhead 58.10%" in out  # peak near Copy is 21, pool 8.8


def test_report_saturation_uses_thread_curve(results_file, capsys):
    code, out, _ = run_cli(
        ["report", "--in", results_file, "--metric", "saturation",
         "--candidate", "near", "--tolerance", "0.05"],
        capsys,
    )
    assert code == 0
    assert "Copy: saturates at 2 threads (20.5 GB/s)" in out  # 20.5 >= 0.95 * 21
    assert "Triad: saturates at 4 threads (20 GB/s)" in out


def test_report_unknown_label(results_file, capsys):
    code, _, err = run_cli(
        ["report", "--in", results_file, "--metric", "degradation",
         "--baseline", "near", "--candidate", "ghost"],
        capsys,
    )
    assert code == 2
    assert "label 'ghost' not found in results" in err


def test_report_missing_pair_arguments(results_file, capsys):
    code, _, err = run_cli(
        ["report", "--in", results_file, "--metric", "degradation"], capsys
    )
    assert code == 2
    assert "needs --baseline and --candidate" in err


def test_report_unreadable_file(tmp_path, capsys):
    code, _, err = run_cli(
        ["report", "--in", str(tmp_path / "nope.csv"), "--metric", "saturation",
         "--candidate", "near"],
        capsys,
    )
    assert code == 2
    assert "cannot load results" in err


def test_report_accepts_json_results(tmp_path, capsys):
    rows = [metric_row("near", "Copy", 1, 10.0), metric_row("near", "Copy", 2, 10.0)]
    path = tmp_path / "results.json"
    path.write_text(report.emit_json(rows, {"host": "x"}))
    code, out, _ = run_cli(
        ["report", "--in", str(path), "--metric", "saturation", "--candidate", "near"],
        capsys,
    )
    assert code == 0
    assert "Copy: saturates at 1 threads (10 GB/s)" in out

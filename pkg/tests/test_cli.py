"""End-to-end command line checks: exit codes, artifacts, determinism."""

import json

import pytest

from dpflow.cli import main

from conftest import case_path


INFEASIBLE_CASE = {
    "baseMVA": 100,
    "bus": [
        {"id": 1, "type": "REF", "vm": 1.0, "va_deg": 0.0},
        {"id": 2, "type": "PQ", "pd_mw": 400.0, "qd_mvar": 80.0},
    ],
    "gen": [{"bus": 1, "vg": 1.0, "qmax_mvar": 9900, "qmin_mvar": -9900}],
    "branch": [{"from": 1, "to": 2, "r": 0.0, "x": 0.2}],
}


def read_json(path):
    def no_const(s):
        raise ValueError(f"non-finite constant {s} in {path}")
    with open(path) as fh:
        return json.load(fh, parse_constant=no_const)


def test_usage_errors_exit_1():
    assert main(["trace"]) == 1            # no case given
    assert main(["no-such-command"]) == 1
    assert main(["trace", "--k", "x"]) == 1


def test_unparsable_case_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--case", str(bad)]) == 2


def test_unreadable_manifest_exits_2(tmp_path):
    assert main(["trace", "--case", str(case_path("case9.m")),
                 "--manifest", str(tmp_path / "missing.json")]) == 2


def test_infeasible_base_case_exits_3(tmp_path):
    case = tmp_path / "overload.json"
    case.write_text(json.dumps(INFEASIBLE_CASE))
    assert main(["trace", "--case", str(case),
                 "--out", str(tmp_path / "o")]) == 3


def test_exhausted_window_budget_exits_4(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps(
        {"trace_config": {"max_windows": 0, "trace_lower_branch": False}}))
    rc = main(["trace", "--case", str(case_path("case9.m")),
               "--manifest", str(manifest), "--out", str(tmp_path / "o")])
    assert rc == 4
    rows = (tmp_path / "o" / "curve_dpf.csv").read_text().splitlines()
    assert len(rows) == 2                  # header + base point only
    assert read_json(tmp_path / "o" / "summary.json")["dpf"]["complete"] \
        is False


def test_validate_ok():
    assert main(["validate", "--case", str(case_path("case39.m"))]) == 0


def test_trace_artifacts_and_verify(tmp_path):
    out = tmp_path / "run"
    rc = main(["trace", "--case", str(case_path("case9.m")),
               "--method", "both", "--bus", "9", "--verify",
               "--out", str(out)])
    assert rc == 0
    summary = read_json(out / "summary.json")
    assert set(summary) == {"dpf", "cpf"}
    for m in ("dpf", "cpf"):
        assert summary[m]["complete"] is True
        assert (out / f"curve_{m}.csv").exists()
        assert (out / f"pv_9_{m}.csv").exists()
    assert abs(summary["dpf"]["lambda_max"]
               - summary["cpf"]["lambda_max"]) < 0.01

    header = (out / "curve_dpf.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "lambda"
    assert "v_9" in header and "e_9" in header and "f_9" in header


def test_trace_is_deterministic(tmp_path):
    argv = ["trace", "--case", str(case_path("case9.m"))]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert (a / "curve_dpf.csv").read_bytes() == \
        (b / "curve_dpf.csv").read_bytes()


def test_trace_with_q_limits_serializes_events(tmp_path):
    spec = tmp_path / "dir.json"
    spec.write_text(json.dumps({"mode": "explicit", "entries": [
        {"bus": 3, "dp_mw": 50.0},
        {"bus": 7, "dp_mw": -50.0, "dq_mvar": -10.0}]}))
    out = tmp_path / "o"
    rc = main(["trace", "--case", str(case_path("case9.m")),
               "--direction", str(spec), "--q-limits", "--verify",
               "--out", str(out)])
    assert rc == 0
    events = read_json(out / "summary.json")["dpf"]["q_limit_events"]
    assert events and events[0]["bus"] == 3
    assert isinstance(events[0]["lambda"], float)


def test_nminus1_row_per_branch(tmp_path):
    out = tmp_path / "o"
    rc = main(["nminus1", "--case", str(case_path("case9.m")),
               "--method", "both", "--workers", "2", "--out", str(out)])
    assert rc == 0
    lines = (out / "nminus1.csv").read_text().splitlines()
    assert lines[0] == "branch,lambda_max_dpf,lambda_max_cpf,status," \
        "linear_solves"
    assert len(lines) == 1 + 9
    by_status = {}
    for line in lines[1:]:
        cells = line.split(",")
        by_status.setdefault(cells[3], []).append(cells)
    # the three generator stub lines island their machine
    assert len(by_status["infeasible_base"]) == 3
    for cells in by_status["infeasible_base"]:
        assert cells[1] == "" and cells[2] == ""
    for cells in by_status["ok"]:
        assert abs(float(cells[1]) - float(cells[2])) < 0.02


def test_compare_matching_curves(tmp_path):
    out = tmp_path / "o"
    assert main(["trace", "--case", str(case_path("case9.m")),
                 "--method", "both", "--out", str(out)]) == 0
    rc = main(["compare", str(out / "curve_dpf.csv"),
               str(out / "curve_cpf.csv"), "--out", str(out)])
    assert rc == 0
    metrics = read_json(out / "compare.json")
    assert metrics["lambda_max_deviation"] < 0.01
    assert metrics["max_voltage_deviation"] < 0.01
    assert metrics["solve_count_ratio"] is None   # counters not in CSV


def test_compare_disjoint_ranges_exits_2(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("lambda,v_1,e_1,f_1\n0,1,1,0\n0.1,0.99,0.99,0\n")
    b.write_text("lambda,v_1,e_1,f_1\n0.5,0.9,0.9,0\n0.6,0.89,0.89,0\n")
    assert main(["compare", str(a), str(b)]) == 2


def test_compare_rejects_non_curve_file(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("time,value\n0,1\n")
    assert main(["compare", str(a), str(a)]) == 2


def test_manifest_supplies_defaults_cli_overrides(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "case": str(case_path("case9.m")),
        "k": 4,
        "out": str(tmp_path / "from_manifest")}))
    assert main(["trace", "--manifest", str(manifest)]) == 0
    assert (tmp_path / "from_manifest" / "curve_dpf.csv").exists()

    assert main(["trace", "--manifest", str(manifest),
                 "--out", str(tmp_path / "cli_wins")]) == 0
    assert (tmp_path / "cli_wins" / "curve_dpf.csv").exists()

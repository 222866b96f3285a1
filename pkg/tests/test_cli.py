import json
import subprocess
import sys

import pytest

from dsrmilp.cli import EXIT_INVALID, EXIT_LIMIT, EXIT_OK, EXIT_USAGE, main
from dsrmilp.feeder import dump_feeder
from oracles import toy_feeder

THREE_LINES = "705-712,708-733,720-706"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_inspect_graph_counts(capsys):
    code, out, _ = run(capsys, "inspect-graph", "--builtin-ieee37")
    assert code == EXIT_OK
    heads = [line for line in out.splitlines() if not line.startswith(" ")]
    assert heads == ["cycles: 2", "nbs-paths: 21", "bs-paths: 8"]
    code, out, _ = run(capsys, "inspect-graph", "--builtin-ieee37", "--json")
    doc = json.loads(out)
    assert [len(doc[k]) for k in ("cycles", "nbs_paths", "bs_paths")] == [2, 21, 8]


def test_solve_three_line_outage(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    code, out, _ = run(capsys, "solve", "--builtin-ieee37", "--fail", THREE_LINES,
                       "--plan-out", str(plan))
    assert code == EXIT_OK
    assert "islands: 2" in out and "PV buses: 710" in out
    assert "switch changes: 712-713" in out and "validation: pass" in out
    doc = json.loads(plan.read_text())
    assert doc["summary"]["dead_buses"] == ["706", "725"]
    code, out, _ = run(capsys, "validate", str(plan), "--builtin-ieee37")
    assert code == EXIT_OK and out.strip() == "pass"


def test_solve_without_outage(capsys):
    code, out, _ = run(capsys, "solve", "--builtin-ieee37", "--json")
    assert code == EXIT_OK
    summary = json.loads(out)["summary"]
    assert summary["switch_changes"] == [] and summary["restored_pct"] == pytest.approx(100.0)
    assert summary["dead_buses"] == [] and summary["valid"]


def test_solve_feeder_file(capsys, tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(dump_feeder(toy_feeder()))
    code, out, _ = run(capsys, "solve", "--feeder", str(path), "--fail", "0", "--json")
    assert code == EXIT_OK
    summary = json.loads(out)["summary"]
    assert summary["switch_changes"] == ["1"]  # unnamed edges print their id
    assert summary["restored_pct"] == pytest.approx(100.0)


def test_tampered_plan_is_rejected(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    run(capsys, "solve", "--builtin-ieee37", "--fail", THREE_LINES, "--plan-out", str(plan))
    doc = json.loads(plan.read_text())
    doc["plan"]["objective"] += 5.0
    plan.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "validate", str(plan), "--builtin-ieee37", "--json")
    assert code == EXIT_INVALID
    report = json.loads(out)
    assert not report["pass"] and {v["check"] for v in report["violations"]} == {"objective"}


def test_export_mps(capsys, tmp_path):
    out_path = tmp_path / "m.mps"
    code, _, _ = run(capsys, "export-mps", "--builtin-ieee37", "--fail", "705-712", "-o", str(out_path))
    assert code == EXIT_OK
    text = out_path.read_text()
    assert text.startswith("NAME") and text.rstrip().endswith("ENDATA")
    code, out, _ = run(capsys, "export-mps", "--builtin-ieee37", "--fail", "705-712")
    assert out == text


def test_small_batch(capsys, tmp_path):
    rec = tmp_path / "records.csv"
    code, out, _ = run(capsys, "batch", "--builtin-ieee37", "--k", "1,2", "--n-per-k", "2",
                       "--records", str(rec), "--mask-timing")
    assert code == EXIT_OK
    assert out.splitlines()[0] == "k,n,max_ms,median_ms,mean_restored_pct"
    rows = rec.read_text().splitlines()
    assert len(rows) == 5 and all(r.split(",")[6] == "NA" for r in rows[1:])


def test_limits_exit_code(capsys):
    code, out, _ = run(capsys, "solve", "--builtin-ieee37", "--fail", THREE_LINES, "--time-limit", "0")
    assert code == EXIT_LIMIT and "time_limit" in out


@pytest.mark.parametrize("argv, needle", [
    (("solve", "--builtin-ieee37", "--fail", "no-such-edge"), "unknown edge"),
    (("solve", "--builtin-ieee37", "--fail", "99"), "out of range"),
    (("batch", "--builtin-ieee37", "--k", "40"), "outage-eligible"),
    (("validate", "/nonexistent/plan.json", "--builtin-ieee37"), "No such file"),
])
def test_usage_errors(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert needle in err


def test_bad_feeder_file(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"buses": []}')
    code, _, err = run(capsys, "inspect-graph", "--feeder", str(path))
    assert code == EXIT_USAGE and err.startswith("error:")


def test_argparse_usage_exit():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dsrmilp.cli", "inspect-graph", "--builtin-ieee37"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "cycles: 2" in proc.stdout

import csv
import io
import json
import re
import subprocess
import sys

import pytest

from obsrobust.cli import run
from obsrobust.model_io import load_fixture

TOY = ["--benchmark", "toy-rover", "--horizon", "5"]


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_toy_rover(capsys):
    code, out, err = _run(capsys, "analyze", *TOY, "--variant", "nonsticky", "--eta", "0.1",
                          "--eps-p", "0.01", "--eps-mbs", "1e-5")
    assert code == 0
    res = json.loads(out)
    assert res["delta"] == pytest.approx(0.1006, abs=1e-3)
    assert res["variant"] == "nonsticky" and "delta" in err


def test_eval_cancer(capsys):
    code, out, _ = _run(capsys, "eval", "--benchmark", "cancer", "--horizon", "inf")
    assert code == 0
    assert json.loads(out)["nominal_value"] == pytest.approx(98.53, abs=0.05)


def test_malformed_model_reports_line(capsys, tmp_path):
    lines = load_fixture("tiger.pomdp").splitlines()
    lines[7] = lines[7].replace("1.0", "one")
    bad = tmp_path / "x.pomdp"
    bad.write_text("\n".join(lines) + "\n")
    fsc = tmp_path / "x.fsc"
    fsc.write_text(load_fixture("tiger.fsc"))
    code, out, err = _run(capsys, "analyze", "--model", str(bad), "--fsc", str(fsc), "--eta", "0.1")
    assert code == 2 and out == ""
    assert re.search(r"line 8\b", err)


def test_missing_file_is_a_model_error(capsys, tmp_path):
    code, _, err = _run(capsys, "eval", "--model", str(tmp_path / "none.pomdp"),
                        "--fsc", str(tmp_path / "none.fsc"))
    assert code == 2 and err


@pytest.mark.parametrize("argv", [
    ["analyze", *TOY, "--eta", "0.1", "--bogus"],
    ["analyze", *TOY],
    ["analyze", *TOY, "--eta", "0.1", "--delta-threshold", "0.1"],
    ["analyze", "--eta", "0.1"],
    ["analyze", *TOY, "--model", "a.pomdp", "--fsc", "a.fsc", "--eta", "0.1"],
    ["analyze", "--benchmark", "toy-rover", "--horizon", "-3", "--eta", "0.1"],
    ["analyze", "--benchmark", "toy-rover", "--horizon", "soon", "--eta", "0.1"],
    ["analyze", *TOY, "--eta", "0.1", "--variant", "both"],
    ["frobnicate"],
    [],
])
def test_usage_errors(capsys, argv):
    code, out, _ = _run(capsys, *argv)
    assert code == 1 and out == ""


def test_numeric_failure_exit_code(capsys):
    # an undiscounted chain with an infinite horizon does not converge
    code, _, err = _run(capsys, "analyze", "--benchmark", "toy-rover", "--horizon", "inf",
                        "--discount", "1", "--eta", "0.1")
    assert code == 3 and err


def test_identical_runs_are_byte_identical(capsys):
    argv = ["analyze", *TOY, "--variant", "sticky", "--eta", "0.1", "--eps-mbs", "1e-3"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    assert a == b and a


def test_simulate_is_seeded(capsys):
    argv = ["simulate", *TOY, "--samples", "500", "--seed", "3"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    assert a == b and json.loads(a)


def test_sweep_csv(capsys):
    code, out, _ = _run(capsys, "sweep", *TOY, "--eta", "0.05,0.1", "--format", "csv",
                        "--eps-mbs", "1e-4")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["threshold", "delta", "nominal", "worst_case"]
    v0 = float(rows[0]["nominal"])
    assert [float(r["threshold"]) for r in rows] == pytest.approx([0.05 * v0, 0.1 * v0])
    assert float(rows[0]["delta"]) < float(rows[1]["delta"])


def test_sweep_range_syntax(capsys):
    code, out, _ = _run(capsys, "sweep", *TOY, "--eta", "0.05:0.15:3", "--eps-mbs", "1e-3")
    assert code == 0 and len(json.loads(out)) == 3


def test_validate(capsys):
    code, out, _ = _run(capsys, "validate", *TOY, "--eta", "0.1", "--samples", "100",
                        "--eps-mbs", "1e-4")
    rep = json.loads(out)
    assert code == 0 and rep["eta_sampled_s"] <= rep["eta_witness"] + 1e-9


def test_out_file_and_quiet(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, out, err = _run(capsys, "eval", *TOY, "--out", str(path), "--quiet")
    assert code == 0 and out == "" and err == ""
    assert json.loads(path.read_text())["nominal_value"] > 0


def test_help_lists_every_flag(capsys):
    code, text, _ = _run(capsys, "analyze", "--help")
    assert code == 0
    for flag in ("--model", "--fsc", "--benchmark", "--variant", "--eta", "--delta-threshold",
                 "--horizon", "--eps-mbs", "--eps-inner", "--eps-p", "--samples", "--seed",
                 "--format", "--out", "--discount", "--quiet"):
        assert flag in text


def test_console_entry_point():
    p = subprocess.run([sys.executable, "-m", "obsrobust", "eval", *TOY, "--quiet"],
                       capture_output=True, text=True)
    assert p.returncode == 0 and json.loads(p.stdout)["nominal_value"] > 0

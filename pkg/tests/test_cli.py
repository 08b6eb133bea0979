import csv
import json
import subprocess
import sys

import pytest

from mdflow.cli import EXIT_INPUT, EXIT_OK, EXIT_OUTPUT, EXIT_UNDERFLOW, main
from mdflow.io import check_vtk


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--case", "case1a", "--scheme", "ppu", "--t-end", "0.8", "--out", str(out), "--fields", "1"])
    assert code == EXIT_OK
    assert "case1a [ppu] completed" in capsys.readouterr().out
    with (out / "report.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 2
    assert sorted(p.name for p in out.glob("*.vtk")) == ["fields_0.8.vtk", "fields_0.vtk"]
    check_vtk(out / "fields_0.8.vtk")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["E_A"] == pytest.approx(0.0625) and summary["status"] == "completed"


def test_run_underflow_exit_code(tmp_path, capsys):
    args = ["run", "--case", "case1a", "--t-end", "0.4", "--tol", "1e-14", "--max-iter", "2", "--out", str(tmp_path)]
    assert main(args) == EXIT_UNDERFLOW
    assert "1e-12" in capsys.readouterr().err
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "dt_underflow"


def test_compare_side_by_side(tmp_path, capsys):
    code = main(["compare", "--case", "case1a", "--t-end", "0.4", "--out", str(tmp_path), "--fields", "1"])
    assert code == EXIT_OK
    table = capsys.readouterr().out
    assert "Newton iterations" in table and "flips 2d" in table
    data = json.loads((tmp_path / "compare.json").read_text())
    assert set(data) == {"ppu", "hu"}
    assert (tmp_path / "ppu" / "report.csv").is_file() and (tmp_path / "hu" / "report.csv").is_file()


def test_converge_small_study(tmp_path, capsys):
    args = ["converge", "--levels", "4", "8", "--reference", "16", "--family", "conforming", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert "conforming" in capsys.readouterr().out
    with (tmp_path / "convergence.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in rows] == [4, 8]
    assert float(rows[0]["err_p_2d"]) > 0


def test_unknown_case_is_input_error(tmp_path, capsys):
    assert main(["run", "--case", "nope", "--out", str(tmp_path)]) == EXIT_INPUT
    assert "nope" in capsys.readouterr().err


def test_invalid_numbers_are_input_errors(tmp_path):
    assert main(["run", "--case", "case1a", "--dt-max", "-1", "--out", str(tmp_path)]) == EXIT_INPUT


def test_unwritable_output_is_output_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--case", "case1a", "--t-end", "0.4", "--out", str(blocker / "x")]) == EXIT_OUTPUT


def test_bad_scheme_rejected_by_parser():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--case", "case1a", "--scheme", "upwind", "--out", "x"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mdflow.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "mdflow" in proc.stdout

import json
import subprocess
import sys

import pytest

from gridrestore.cli import main

from conftest import DATA, SCENARIOS

IEEE = str(DATA / "ieee37.grid")


def test_restore_json(capsys):
    assert main(["restore", "--grid", IEEE, "--faults", "713-704", "--format", "structured"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["close"] == ["713-724"] and data["open"] == []


def test_restore_delimited(capsys):
    assert main(["restore", "--grid", IEEE, "--faults", "730-709", "--format", "delimited", "--name", "s2"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("scenario,faults") and out[1].startswith("s2,730-709,1,708-718")


@pytest.mark.parametrize("argv", [
    ["restore", "--grid", "/nonexistent.grid"],
    ["restore", "--grid", IEEE, "--faults", "713-999"],
    ["restore", "--grid", IEEE, "--faults", "713-724"],
    ["restore", "--grid", IEEE, "--faults", "713-704", "--max-ties", "2"],
])
def test_input_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error:" in capsys.readouterr().err


def test_infeasible_exit_1(tmp_path, capsys):
    g = tmp_path / "g.grid"
    g.write_text("""vlimits umin=0.99 umax=1.1 u0=1
bus s pl=0 ql=0 slack
bus a pl=50 ql=0
bus b pl=10 ql=0
branch s a r=1 x=1 smax=999
branch s b r=0.0001 x=0.0001 smax=999
""")
    assert main(["restore", "--grid", str(g), "--faults", "s-b"]) == 1
    assert "infeasible" in capsys.readouterr().err


def test_suite_and_verify(tmp_path, capsys):
    grid = SCENARIOS.parent / "ieee37.grid"
    (tmp_path / "a.scn").write_text(f"name=a\ngrid={grid}\nfaults=713-704\nexpect_close=713-724\n")
    assert main(["suite", "--dir", str(tmp_path)]) == 0
    (tmp_path / "b.scn").write_text(f"name=b\ngrid={grid}\nfaults=713-704\nexpect_open=720-707\n")
    assert main(["suite", "--dir", str(tmp_path)]) == 3
    assert "MISMATCH b" in capsys.readouterr().err
    assert main(["verify", "scenario", str(SCENARIOS / "ieee37_3_double.scn")]) == 0
    assert main(["verify", "search", "--count", "20"]) == 0
    assert main(["verify", "shed", "--count", "20"]) == 0


def test_gen(tmp_path, capsys):
    out = tmp_path / "ff.grid"
    assert main(["gen", "--base", str(DATA / "feeder267_base.grid"), "--ties", str(DATA / "four_feeder_ties.txt"),
                 "--dgs", "8", "--seed", "1069", "--out", str(out), "--count"]) == 0
    assert "radial topologies:" in capsys.readouterr().err
    body = [ln for ln in (DATA / "four_feeder.grid").read_text().splitlines() if not ln.startswith("#")]
    assert out.read_text().splitlines() == body


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gridrestore", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "restore" in proc.stdout

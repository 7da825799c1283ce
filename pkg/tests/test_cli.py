import csv
import io
import json
import subprocess
import sys

import pytest

from reslab.cli import EXIT_BUDGET, EXIT_INVALID, main

# small configurations that finish in about a second each
SMALL = {
    "theta": ["--k", "1,8,1000"],
    "coeffs": ["--jmax", "12"],
    "coeffs-cube": ["--k", "3", "--jmax", "6"],
    "lowdeg": ["--k", "16,1024", "--d", "2,4"],
    "witness": ["--Q", "20", "--d", "2"],
    "l1degree": ["--function", "interval", "--Q", "30", "--d", "0,2,4"],
    "ganzburg": ["--eps", "0.3,0.2", "--d-max", "40", "--spacing", "0.02", "--no-drift"],
    "gns": ["--table", "sign", "--N", "20000"],
    "gns-comparison": ["--table", "comparison", "--k", "2,16", "--d", "2,4"],
    "learn": ["--n", "3", "--k", "1", "--d", "2", "--m", "2000", "--m-test", "5000"],
}


def run(tmp_path, name, argv, fmt=None):
    cmd = name.split("-")[0]
    out = tmp_path / f"{name}.{fmt or 'out'}"
    args = [cmd, *argv, "--out", str(out)]
    if fmt:
        args += ["--format", fmt]
    assert main(args) == 0
    return out.read_bytes()


def read_csv(raw):
    return list(csv.DictReader(io.StringIO(raw.decode())))


@pytest.mark.parametrize("name", sorted(SMALL))
@pytest.mark.parametrize("fmt", [None, "csv", "json"])
def test_output_is_byte_reproducible(tmp_path, name, fmt):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = run(tmp_path / "a", name, SMALL[name], fmt)
    b = run(tmp_path / "b", name, SMALL[name], fmt)
    assert a == b and len(a) > 0
    if fmt == "json" and name != "learn":
        json.loads(a)
    if fmt == "json":
        assert b"\r" not in a


def test_theta_row_is_inside_its_sandwich(tmp_path):
    rows = read_csv(run(tmp_path, "theta", ["--k", "1000"]))
    assert len(rows) == 1 and rows[0]["k"] == "1000"
    assert float(rows[0]["lower"]) <= float(rows[0]["theta"]) <= float(rows[0]["upper"])
    assert rows[0]["inside"] == "true"


def test_lowdeg_ratio_below_one(tmp_path):
    rows = read_csv(run(tmp_path, "lowdeg", ["--k", "1024", "--d", "4"]))
    assert float(rows[0]["ratio"]) < 1
    assert rows[0]["in_range"] == "true"


def test_json_keys_are_sorted(tmp_path):
    doc = json.loads(run(tmp_path, "witness", SMALL["witness"]))
    assert list(doc) == sorted(doc)


def test_learn_json_lines(tmp_path):
    raw = run(tmp_path, "learn", SMALL["learn"] + ["--seeds", "2"], "json")
    lines = raw.decode().splitlines()
    assert len(lines) == 2
    recs = [json.loads(line) for line in lines]
    assert [r["seed"] for r in recs] == [0, 1]
    assert all(list(r) == sorted(r) for r in recs)


@pytest.mark.parametrize("argv,flag", [
    (["theta", "--k", "0"], "--k"),
    (["coeffs", "--jmax", "-1"], "--jmax"),
    (["witness", "--Q", "1"], "--Q"),
    (["learn", "--m", "10"], "--m"),
    (["gns", "--rho", "1.5"], "--rho"),
    (["ganzburg", "--eps", "0"], "--eps"),
])
def test_invalid_parameter_exit_code(argv, flag, capsys):
    assert main(argv) == EXIT_INVALID
    err = capsys.readouterr().err
    assert flag in err and "invalid" in err


def test_unparseable_flag_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["theta", "--k", "many"])
    assert info.value.code == EXIT_INVALID
    assert "--k" in capsys.readouterr().err


def test_budget_exit_code(capsys):
    assert main(["coeffs", "--k", "40", "--jmax", "20"]) == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_no_files_besides_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    main(["theta", "--out", "t.csv"])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["t.csv"]


def test_selftest_exits_zero(tmp_path):
    assert main(["selftest", "--out", str(tmp_path / "s.csv")]) == 0
    rows = read_csv((tmp_path / "s.csv").read_bytes())
    assert rows and all(r["passed"] == "true" for r in rows)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "reslab", "theta", "--k", "8"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.splitlines()[0] == "k,theta,lower,upper,inside"

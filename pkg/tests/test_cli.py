import json

import pytest

from hermspde.cli import main


def _strip(man):
    man = dict(man)
    man.pop("started")
    man.pop("finished")
    return man


def test_solve_is_deterministic_and_config_round_trips(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["solve", "--seed", "7", "--T", "0.1", "--out", str(a)]) == 0
    assert main(["solve", "--seed", "7", "--T", "0.1", "--out", str(b)]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert _strip(ma) == _strip(mb)
    assert set(ma["files"]) == {p.name for p in a.iterdir()} - {"manifest.json"}
    assert main(["solve", "--config", str(a / "config.json"), "--out", str(c)]) == 0
    assert _strip(json.loads((c / "manifest.json").read_text())) == _strip(ma)
    out = capsys.readouterr().out
    assert "measured" in out and ("<=" in out or "==" in out)


@pytest.mark.parametrize("argv", [["solve", "--dt", "0"], ["bogus"], ["solve", "--nope", "1"], ["solve", "--paths", "0"],
                                  ["solve", "--dt", "0.3", "--T", "1.0"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_bad_config_file_exit_2(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"y": {"mystery": 1}}))
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    bad.write_text(json.dumps({"field": "lipschitz"}))
    assert main(["heat", "--config", str(bad), "--paths", "10"]) == 2


def test_formats(capsys):
    assert main(["adjoint", "--format", "json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and all("tolerance" in c and "value" in c for c in rep["checks"])
    assert main(["adjoint", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "name,measured,relation,tolerance,passed" and len(lines) == 5


@pytest.mark.parametrize("cmd,extra", [
    ("picard", ["--paths", "8"]), ("residual", []), ("heat", ["--paths", "2000"]), ("evolution", []),
    ("feynman-kac", ["--paths", "4000"]), ("mckean-vlasov", []), ("mollifier", ["--paths", "2000"]),
    ("duality", ["--paths", "20"]), ("flow-check", []), ("explode", []), ("monotonicity", []),
])
def test_subcommands_pass(cmd, extra, tmp_path):
    assert main([cmd, *extra, "--out", str(tmp_path / cmd)]) == 0
    man = json.loads((tmp_path / cmd / "manifest.json").read_text())
    assert man["passed"] and man["command"] == cmd
    report = json.loads((tmp_path / cmd / "report.json").read_text())
    assert all(c["passed"] == (c["value"] <= c["tolerance"] if c["relation"] == "<=" else
                               c["value"] >= c["tolerance"] if c["relation"] == ">=" else c["passed"])
               for c in report["checks"])


def test_picard_series_written(tmp_path):
    assert main(["picard", "--paths", "4", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "picard.csv").read_text().strip().splitlines()
    assert rows[0] == "k,e_k" and len(rows) == 7


def test_suite_reports_every_criterion(tmp_path, capsys):
    code = main(["suite", "--N", "32", "--paths", "2000", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    man = json.loads((tmp_path / "manifest.json").read_text())
    failed = [c["name"] for c in man["checks"] if not c["passed"]]
    # the only red is the log-concavity part of criterion 2
    assert failed == ["2 Picard decay: max second difference of log e_k (concavity)"]
    assert code == 1
    for k in range(1, 11):
        assert f"[PASS] {k} " in out or f"[FAIL] {k} " in out


def test_suite_only_subset(capsys):
    assert main(["suite", "--only", "5", "9"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] 5 " in out and "[PASS] 9 " in out
    assert "] 1 " not in out and "] 2 " not in out
    assert main(["suite", "--only", "11"]) == 2

from pathlib import Path

import pytest

from gmtrj.cli import main

TOY = """[run]
case = toy
space = three_models
iterations = 3000
burn_in = 300
seed = 4
trace = yes

[grid]
algorithm = RJ, GMTRJ
weights = GMTM-quad
k = 2
"""

LC = """[run]
case = latentclass
iterations = 2500
burn_in = 500
seed = 1
trace = yes

[grid]
algorithm = RJ, GMTRJ-man-II
k = 3
"""


def _run(tmp_path, text, name, *extra):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(text)
    out = tmp_path / name
    return main(["run", str(cfg), "--out", str(out), "--workers", "1", *extra]), out


def _body(path):
    return Path(path).read_text()


def test_run_writes_tables_with_provenance(tmp_path):
    code, out = _run(tmp_path, TOY, "toy")
    assert code == 0
    for name in ("summary.csv", "efficiency.csv", "report.txt", "table_models.csv", "table_acceptance.csv"):
        assert (out / name).exists()
    head = _body(out / "summary.csv").splitlines()[:3]
    assert head[0].startswith("# tool=gmtrj") and head[1].startswith("# config_digest=")
    assert head[2] == "# seed=4"
    assert "exact" in _body(out / "table_models.csv")
    assert len(list((out / "traces").glob("*.trace"))) == 2


def test_rerun_is_byte_identical(tmp_path):
    _, a = _run(tmp_path, TOY, "a")
    _, b = _run(tmp_path, TOY, "b")
    for name in ("summary.csv", "table_models.csv", "table_acceptance.csv"):
        assert _body(a / name) == _body(b / name)


def test_seed_override_changes_results(tmp_path):
    _, a = _run(tmp_path, TOY, "a")
    _, b = _run(tmp_path, TOY, "b", "--seed", "5")
    assert "# seed=5" in _body(b / "summary.csv")
    assert _body(a / "summary.csv") != _body(b / "summary.csv")


def test_config_error_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "[run]\ncase = toy\nk = 3\n", "bad")
    assert code == 2
    assert "bad.ini:3:" in capsys.readouterr().err


def test_missing_data_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "[run]\ncase = logistic\ndata = nowhere.csv\n", "nodata")
    assert code == 3
    err = capsys.readouterr().err
    assert "nowhere.csv" in err and "remediation" in err


def test_summarize_reproduces_run_tables(tmp_path):
    _, out = _run(tmp_path, LC, "lc")
    table4 = _body(out / "table4.csv")
    assert "C>=11," in table4
    traces = sorted(str(p) for p in (out / "traces").glob("*.trace"))
    assert main(["summarize", *traces, "--out", str(tmp_path / "again")]) == 0
    for name in ("summary.csv", "table4.csv", "table5.csv", "figure4.csv", "figure5.csv", "efficiency.csv"):
        assert _body(tmp_path / "again" / name) == _body(out / name), name


def test_summarize_pool(tmp_path):
    _, out = _run(tmp_path, TOY.replace("trace = yes", "trace = yes\nreplicates = 2").replace("RJ, GMTRJ", "RJ"), "pool")
    traces = sorted(str(p) for p in (out / "traces").glob("*.trace"))
    assert main(["summarize", *traces, "--pool", "--out", str(tmp_path / "pooled")]) == 0
    rows = [r for r in _body(tmp_path / "pooled" / "summary.csv").splitlines() if not r.startswith("#")]
    assert len(rows) == 2


def test_summarize_rejects_other_trace_version(tmp_path, capsys):
    _, out = _run(tmp_path, TOY, "v")
    trace = next((out / "traces").glob("*.trace"))
    trace.write_text(trace.read_text().replace("version=1", "version=2", 1))
    assert main(["summarize", str(trace), "--out", str(tmp_path / "s")]) == 3
    err = capsys.readouterr().err
    assert "version 2" in err and "expected 1" in err


def test_verify_small_k(capsys):
    assert main(["verify", "--k", "1,2"]) == 0
    out = capsys.readouterr().out
    assert "0 failed" in out
    assert "negative control" in out


def test_verify_bad_space_file(tmp_path, capsys):
    bad = tmp_path / "bad.toy"
    bad.write_text("[model 1]\npoints = 0\nmass = -1\n")
    assert main(["verify", "--space", str(bad), "--k", "1"]) == 3

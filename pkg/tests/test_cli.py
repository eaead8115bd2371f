import csv
import json
from pathlib import Path

import pytest

from mbpnpi import cli
from mbpnpi.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, run_cli

CONFIGS = Path(__file__).parent.parent / "configs"


def small_config(tmp_path, **experiment):
    data = json.loads((CONFIGS / "regime2.json").read_text())
    data["experiment"] = {"tgrid": [20, 40], "n": 300, "survival_tgrid": [5], "survival_n": 300, **experiment}
    path = tmp_path / "small.json"
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name,label", [
    ("regime1", "I"),
    ("regime2", "II, C=4"),
    ("regime3", "III, Q=4.4444"),
    ("regime4", "IV"),
])
def test_classify(capsys, name, label):
    assert run_cli(["classify", "--config", str(CONFIGS / f"{name}.json")]) == EXIT_OK
    assert capsys.readouterr().out.startswith(label)


def test_usage_errors(capsys, tmp_path):
    assert run_cli(["explode", "--config", "x.json"]) == EXIT_USAGE
    assert run_cli(["classify"]) == EXIT_USAGE
    assert run_cli(["classify", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE
    assert run_cli(["verify", "--config", str(CONFIGS / "regime2.json"), "--workers", "0"]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage error" in err and "error" in err


def test_config_errors_go_to_stderr(capsys, tmp_path):
    data = json.loads((CONFIGS / "regime2.json").read_text())
    del data["seed"]
    data["model"]["offspring"]["gamma"] = 1.5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert run_cli(["classify", "--config", str(path)]) == EXIT_USAGE
    assert "seed required" in capsys.readouterr().err
    assert run_cli(["classify", "--config", str(path), "--seed", "3"]) == EXIT_USAGE
    assert "gamma ∈ (0,1]" in capsys.readouterr().err


def test_analytic_outputs(tmp_path):
    out = tmp_path / "out"
    assert run_cli(["analytic", "--config", str(CONFIGS / "regime3.json"), "--out", str(out)]) == EXIT_OK
    meta = json.loads((out / "run.json").read_text())
    assert meta["master_seed"] == 20261018 and len(meta["config_digest"]) == 64
    for name in meta["files"]:
        rows = read_csv(out / name)
        assert rows[0] == ["argument", "value", "method"] and len(rows) > 1
    assert {"delta.csv", "H.csv", "V.csv", "W.csv"} <= set(meta["files"])


def test_simulate_outputs(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "sim"
    assert run_cli(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "samples.csv")
    assert rows[0] == ["replicate", "t", "y", "truncated"]
    assert len(rows) == 1 + 2 * 300
    assert all(r[3] in ("0", "1") and int(r[2]) >= 0 for r in rows[1:])
    meta = json.loads((out / "run.json").read_text())
    assert meta["n"] == 300 and set(meta["truncated_fraction"]) == {"20", "40"}


def test_verify_writes_reports(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "verify"
    code = run_cli(["verify", "--config", str(cfg), "--out", str(out)])
    printed = capsys.readouterr().out
    assert code == EXIT_OK, printed
    assert "PASS" in printed
    assert read_csv(out / "lt.csv")[0] == ["lambda", "empirical", "theoretical", "abs_err", "se"]
    assert read_csv(out / "cdf.csv")[0] == ["x", "empirical", "theoretical"]
    assert read_csv(out / "survival.csv")[0] == ["t", "empirical", "theoretical", "se"]
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["provenance"]["master_seed"] == 20261017
    assert b"\r\n" not in (out / "lt.csv").read_bytes()


def test_verify_failure_exit_code(tmp_path, capsys):
    # the regime IV formula is far from its limit at t = 1
    data = json.loads((CONFIGS / "regime4.json").read_text())
    data["experiment"] = {"tgrid": [1], "n": 1, "survival_n": 0, "formula_t": 1.0}
    path = tmp_path / "early.json"
    path.write_text(json.dumps(data))
    code = run_cli(["verify", "--config", str(path), "--out", str(tmp_path / "fail")])
    assert "FAIL" in capsys.readouterr().out
    assert code == EXIT_FAIL


def test_cell_format():
    assert cli._cell(0.1) == "0.10000000000000001"
    assert cli._cell(2**70) == str(2**70)
    assert cli._cell(True) == "1" and cli._cell(None) == ""
    assert cli._cell(1 / 3) == "0.33333333333333331"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    cli.write_csv(tmp_path / "a.csv", ("x",), [(1,), (2,)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv"]
    assert (tmp_path / "a.csv").read_bytes() == b"x\n1\n2\n"

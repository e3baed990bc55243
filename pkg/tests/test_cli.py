import csv
import os

import pytest

from slbalance.cli import main
from slbalance.logio import read_trial_csv

SHORT = ["--set", "scenario.duration=0.3"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_row_count_and_output(tmp_path, capsys):
    assert main(["run", "--scenario", "frontal", "--condition", "comp", "--out", str(tmp_path),
                 *SHORT]) == 0
    out = capsys.readouterr().out
    assert "mean CoM-SUP distance" in out and "mean CoP-SUP distance" in out
    path = tmp_path / "frontal_comp_s0.csv"
    assert len(path.read_text().splitlines()) == 1 + 1000 * 0.3
    assert (tmp_path / "frontal_comp_s0.csv.meta").exists()
    assert read_trial_csv(path).metadata["condition"] == "comp"


def test_run_twice_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--condition", "honly", "--seed", "7", "--out",
                     str(tmp_path / d), *SHORT]) == 0
    a = (tmp_path / "a" / "frontal_honly_s7.csv").read_bytes()
    b = (tmp_path / "b" / "frontal_honly_s7.csv").read_bytes()
    assert a == b


def test_unknown_key_exit_2(tmp_path, capsys):
    assert main(["run", "--set", "mpc.qq=1", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "mpc.qq" in err and "--set:1:1" in err


def test_config_file_error_has_line_and_column(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mpc.horizon = 0.5\nmpc.k0 = abc\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert f"{cfg}:2:10:" in capsys.readouterr().err


def test_usage_errors():
    assert main(["bogus"]) == 2
    assert main(["run", "--scenario", "sideways"]) == 2
    assert main(["compare", "--trials", "0"]) == 2


def test_compare_artifacts_and_exit(tmp_path, capsys):
    rc = main(["compare", "--scenario", "lateral", "--out", str(tmp_path), *SHORT])
    out = capsys.readouterr().out
    verdicts = dict(line.rsplit(": ", 1) for line in out.splitlines()
                    if line.endswith(("PASS", "FAIL")))
    assert rc == (0 if verdicts["CoM-SUP: Comp < min(HOnly, NoComp)"] == "PASS" else 1)
    rows = read_csv(tmp_path / "summary_lateral.csv")
    assert [r["condition"] for r in rows] == ["honly", "nocomp", "comp"]
    h = rows[0]["config_hash"]
    for name in os.listdir(tmp_path):
        if name.endswith(".svg"):
            assert h in (tmp_path / name).read_text()
    assert h in (tmp_path / "verdicts_lateral.txt").read_text()
    assert "mpc.k0 = 4.0" in (tmp_path / "config_lateral.txt").read_text()


def test_compare_several_trials(tmp_path):
    main(["compare", "--trials", "3", "--out", str(tmp_path), "--set", "scenario.duration=0.2"])
    rows = read_csv(tmp_path / "summary_frontal.csv")
    assert all(r["n_trials"] == "3" for r in rows)
    assert float(rows[2]["com_sup_sd"]) > 0
    assert sorted(n for n in os.listdir(tmp_path) if n.startswith("frontal_comp_s")
                  and n.endswith(".csv")) == [f"frontal_comp_s{k}.csv" for k in range(3)]


def test_sweep_table(tmp_path):
    assert main(["sweep", "--param", "planner.gamma", "--values", "0.1,1,10", "--out",
                 str(tmp_path), "--set", "scenario.duration=0.2"]) == 0
    rows = read_csv(tmp_path / "sweep_frontal_planner.gamma.csv")
    assert [r["value"] for r in rows] == ["0.1", "1.0", "10.0"]


def test_sweep_single_value_matches_compare(tmp_path):
    args = ["--set", "scenario.duration=0.2"]
    main(["sweep", "--param", "mpc.k0", "--values", "4", "--out", str(tmp_path / "s"), *args])
    main(["compare", "--out", str(tmp_path / "c"), *args])
    a = (tmp_path / "s" / "mpc.k0=4" / "summary_frontal.csv").read_bytes()
    b = (tmp_path / "c" / "summary_frontal.csv").read_bytes()
    assert a == b
    row = read_csv(tmp_path / "s" / "sweep_frontal_mpc.k0.csv")[0]
    summary = read_csv(tmp_path / "c" / "summary_frontal.csv")
    assert row["comp_com_sup_mean"] == summary[2]["com_sup_mean"]


def test_sweep_unknown_parameter(tmp_path, capsys):
    assert main(["sweep", "--param", "mpc.nope", "--values", "1", "--out", str(tmp_path)]) == 2
    assert "mpc.nope" in capsys.readouterr().err


def test_sweep_bad_value(tmp_path):
    assert main(["sweep", "--param", "mpc.k0", "--values", "x", "--out", str(tmp_path)]) == 2


@pytest.mark.slow
def test_k0_sweep_effort_trend(tmp_path):
    main(["sweep", "--param", "mpc.k0", "--values", "2,4,8", "--out", str(tmp_path),
          "--set", "scenario.duration=1.0"])
    rows = read_csv(tmp_path / "sweep_frontal_mpc.k0.csv")
    effort = [float(r["comp_effort_mean"]) for r in rows]
    assert effort[0] < effort[1] < effort[2]


def test_keys_listing(capsys):
    assert main(["keys"]) == 0
    assert "mpc.k0 = 4.0  [-]" in capsys.readouterr().out

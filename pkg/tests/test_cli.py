import json

import pytest

from affinity_lb.cli import main
from affinity_lb.simulate import Trajectory


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_tables_reproduce_both(capsys, in_tmp):
    assert main(["tables"]) == 0
    out = capsys.readouterr().out
    assert "2,31" in out and "25,46" in out
    assert "0.5,/,/,5,9,18,46" in out
    assert "0.3333333,3,5,7,12,22,54" in out
    assert (in_tmp / "table1.csv").exists() and (in_tmp / "table2.csv").exists()


def test_tables_custom_output(capsys, in_tmp):
    assert main(["tables", "--which", "table1", "--ks", "2,3", "--out", "t.csv"]) == 0
    assert (in_tmp / "t.csv").read_text().splitlines() == ["k,d_min", "2,31", "3,34"]


def test_simulate_writes_trajectory(capsys, in_tmp):
    rc = main(["simulate", "--n", "50", "--d1", "3", "--horizon", "5", "--out", "t.csv",
               "--summary", "s.json"])
    assert rc == 0
    tr = Trajectory.from_csv(in_tmp / "t.csv")
    assert len(tr.times) == 6
    assert json.loads((in_tmp / "s.json").read_text())["n_samples"] == 6


def test_simulate_graph_and_replications(in_tmp):
    assert main(["simulate", "--model", "graph", "--graph", "cycle:10", "--horizon", "3",
                 "--out", "g.csv"]) == 0
    assert main(["simulate", "--n", "20", "--horizon", "2", "--replications", "2",
                 "--out", "r.csv"]) == 0
    assert (in_tmp / "r_seed0.csv").exists() and (in_tmp / "r_seed1.csv").exists()


def test_simulate_general_family(in_tmp):
    assert main(["simulate", "--model", "general", "--family", "sets:0,1;1,2", "--rates", "1,1",
                 "--horizon", "2", "--out", "x.csv"]) == 0


@pytest.mark.parametrize("argv", [
    ["simulate", "--horizon", "0"],
    ["simulate", "--mu1", "0.5", "--mu2", "0.5"],
    ["simulate", "--bogus"],
    ["fluid", "--initial", "sideways"],
    ["fixpoint", "--lambda", "1.5"],
    ["lambda0", "--family", "nonsense"],
    ["couple", "--ref", "jsq", "--n", "50", "--d", "20", "--k", "2"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_fluid_initial_states(in_tmp, capsys):
    for init in ("empty", "queueing", "random"):
        assert main(["fluid", "--initial", init, "--horizon", "1", "--out", f"{init}.csv"]) == 0
    assert main(["fluid", "--d1", "25", "--initial", "no-queueing", "--horizon", "1"]) == 0
    assert main(["fluid", "--d1", "3", "--initial", "no-queueing", "--horizon", "1"]) == 2
    tr = Trajectory.from_csv(in_tmp / "queueing.csv")
    assert tr.qbar[-1, 1, 1] == pytest.approx(0.6)


def test_fluid_integration_failure_exits_1(capsys):
    rc = main(["fluid", "--initial", "random", "--mu1", "5", "--mu2", "1", "--dt", "1",
               "--horizon", "20"])
    assert rc == 1


def test_fixpoint_report_and_sweep(capsys, in_tmp):
    assert main(["fixpoint", "--d1", "25"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["d1_star"] == 18
    assert main(["fixpoint", "--out", "r.json", "--sweep", "0.6:0.8:0.1"]) == 0
    assert json.loads((in_tmp / "r.json").read_text())["metrics"]["switch_fraction"] == 0.25
    assert len((in_tmp / "sweep.csv").read_text().splitlines()) == 4


def test_lambda0_command(capsys):
    assert main(["lambda0", "--family", "path:3", "--rates", "1,1"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda0"] == pytest.approx(2 / 3, abs=1e-9)
    assert main(["lambda0", "--family", "sets:0,1;1,2", "--rates", "1,1"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda0"] == pytest.approx(2 / 3, abs=1e-9)


@pytest.mark.parametrize("ref", ["ra", "mjsq", "jsq"])
def test_couple_command(ref, capsys, in_tmp):
    assert main(["couple", "--ref", ref, "--seeds", "2", "--events", "3000",
                 "--log", "log.csv"]) == 0
    assert "majorization held: yes" in capsys.readouterr().out
    lines = (in_tmp / "log.csv").read_text().splitlines()
    assert lines[0] == "t,event_kind,pos_aff,pos_ref,ok" and len(lines) == 3001


def test_config_file_and_override(in_tmp):
    (in_tmp / "c.yaml").write_text("simulate:\n  n: 30\n  horizon: 4\n  lambda: 0.5\n")
    assert main(["simulate", "--config", "c.yaml", "--out", "a.csv"]) == 0
    assert len(Trajectory.from_csv(in_tmp / "a.csv").times) == 5
    assert main(["simulate", "--config", "c.yaml", "--horizon", "2", "--out", "b.csv"]) == 0
    assert len(Trajectory.from_csv(in_tmp / "b.csv").times) == 3
    (in_tmp / "c.json").write_text(json.dumps({"d1": 25, "horizon": 1}))
    assert main(["fluid", "--config", "c.json", "--out", "f.csv"]) == 0


def test_config_file_errors(in_tmp, capsys):
    (in_tmp / "bad.yaml").write_text("frobnicate: 1\n")
    assert main(["simulate", "--config", "bad.yaml"]) == 2
    assert main(["simulate", "--config", "missing.yaml"]) == 2
    (in_tmp / "list.yaml").write_text("- 1\n- 2\n")
    assert main(["simulate", "--config", "list.yaml"]) == 2


def test_module_entry_point(in_tmp):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "affinity_lb", "tables", "--which", "d1star"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "54" in res.stdout

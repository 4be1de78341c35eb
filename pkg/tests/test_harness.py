import csv
import io

import numpy as np
import pytest

from parallel_olp import harness
from parallel_olp.harness import (
    EXIT_INFEASIBLE_PLAN,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    ExperimentSpec,
    execute,
    main,
    read_config,
    trial_seed,
)
from parallel_olp.instances import read_instance
from parallel_olp.policies import PolicyError
from parallel_olp.dual_lp import LpStatus


def rows_of(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_wall(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_single_first_order_trial(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--T", "100", "--algo", "first_order", "--trials", "1",
                 "--out", str(out)]) == EXIT_OK
    rows = rows_of(out)
    assert len(rows) == 1 and rows[0]["lp_solves"] == "0"
    assert rows[0]["algorithm"] == "first_order" and rows[0]["T"] == "100"
    assert float(rows[0]["total"]) == pytest.approx(
        float(rows[0]["gap"]) + float(rows[0]["violation"]))


def test_rerun_is_byte_identical(tmp_path):
    args = ["run", "--T", "200", "300", "--algo", "hybrid", "ahdl", "--beta", "0.5",
            "--trials", "3", "--seed", "17", "--guard", "theoretical"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert strip_wall(a.read_text()) == strip_wall(b.read_text())


def test_workers_do_not_change_results(tmp_path):
    args = ["run", "--T", "150", "--algo", "hybrid", "first_order", "--trials", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--workers", "2", "--out", str(b)]) == EXIT_OK
    assert strip_wall(a.read_text()) == strip_wall(b.read_text())


def test_seeds_paired_across_algorithms():
    spec = ExperimentSpec([120], algorithms=["hybrid", "first_order"], trials=3)
    by_cell = execute(spec)
    seeds = [[r["seed"] for r in res] for res in by_cell.values()]
    assert seeds[0] == seeds[1]
    assert trial_seed(0, 120, 1, "input1", 0) != trial_seed(0, 120, 1, "input1", 1)
    assert trial_seed(5, 120, 1, "input1", 0) == 5 ^ trial_seed(0, 120, 1, "input1", 0)


def test_adding_algorithms_keeps_cells():
    small = execute(ExperimentSpec([100], algorithms=["hybrid"], trials=2))
    big = execute(ExperimentSpec([100], algorithms=["ahdl", "hybrid"], trials=2))
    key = next(iter(small))
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wall_time"} for r in rs]
    assert strip(small[key]) == strip(big[key])


def test_frequency_rule():
    spec = ExperimentSpec([1000], betas=[1 / 3, 1 / 2, 2 / 3])
    assert [c[2] for c in spec.cells()] == [10, 32, 100]
    assert ExperimentSpec([10], freq=4).cells()[0][2] == 4
    with pytest.raises(ValueError):
        ExperimentSpec([10], betas=[0.0])
    with pytest.raises(ValueError):
        ExperimentSpec([10], trials=0)


def test_compare_counts(capsys):
    assert main(["compare", "--T", "1000", "--algo", "ahdl", "first_order", "hybrid",
                 "--trials", "1"]) == EXIT_OK
    table = capsys.readouterr().out.splitlines()
    cols = table[0].split()
    rows = {line.split()[1]: dict(zip(cols, line.split())) for line in table[1:]}
    assert rows["hybrid"]["lp_solves"] == str(1000 // 10)
    assert rows["ahdl"]["lp_solves"] == "999"
    assert rows["first_order"]["lp_solves"] == "0"


def test_compare_needs_two_algorithms(capsys):
    assert main(["compare", "--T", "50", "--algo", "hybrid", "--trials", "1"]) != EXIT_OK


def test_first_order_faster_than_ahdl(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["compare", "--T", "10000", "--algo", "ahdl", "first_order",
                 "--trials", "1", "--out", str(out)]) == EXIT_OK
    wall = {r["algorithm"]: float(r["wall_time"]) for r in rows_of(out)}
    assert wall["first_order"] < wall["ahdl"]


def test_plan_command(capsys):
    assert main(["plan", "--T", "1000"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("f=4 ")
    assert main(["plan", "--T", "1", "--m", "1", "--budget", "1e9"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("f=1 ")
    assert main(["plan", "--T", "100", "--budget", "1"]) == EXIT_INFEASIBLE_PLAN
    captured = capsys.readouterr()
    assert "feasible=false" in captured.out and "warning" in captured.err


def test_gen_and_replay(tmp_path, capsys):
    inst_path = tmp_path / "inst.csv"
    assert main(["gen", "--T", "80", "--m", "2", "--seed", "3", "--out", str(inst_path)]) == EXIT_OK
    inst = read_instance(inst_path)
    assert inst.horizon == 80 and inst.resource_count == 2
    traj_path = tmp_path / "traj.csv"
    assert main(["replay", str(inst_path), "--algo", "hybrid", "--freq", "8",
                 "--out", str(traj_path)]) == EXIT_OK
    line = capsys.readouterr().out
    assert "lp_solves=10" in line and "f=8" in line
    assert len(traj_path.read_text().splitlines()) == 81


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# sweep\nT = 60, 90\nalgo = first_order\ntrials = 2\nseed = 4\n")
    assert read_config(cfg)[:3] == ["--T", "60", "90"]
    out = tmp_path / "o.csv"
    assert main(["run", "--config", str(cfg), "--trials", "1", "--out", str(out)]) == EXIT_OK
    rows = rows_of(out)
    assert [r["T"] for r in rows] == ["60", "90"]  # flags win: one trial per cell


def test_solver_failure_manifest(tmp_path, monkeypatch):
    def boom(instance, config, steps=None):
        raise PolicyError(LpStatus.MAX_ITERATIONS, 7)

    monkeypatch.setattr(harness, "run_policy", boom)
    out = tmp_path / "f.csv"
    code = main(["run", "--T", "30", "--algo", "hybrid", "--trials", "2", "--out", str(out)])
    assert code == EXIT_SOLVER_FAILURE
    manifest = (tmp_path / "f.csv.errors.json").read_text()
    assert '"t": 7' in manifest and "max_iterations" in manifest


def test_reduced_frequency_ordering(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["run", "--T", "1000", "10000", "--algo", "hybrid",
                 "--beta", str(1 / 3), "0.5", str(2 / 3), "--trials", "100",
                 "--guard", "theoretical", "--out", str(out)]) == EXIT_OK
    rows = rows_of(out)
    for T in ("1000", "10000"):
        means = {}
        for r in rows:
            if r["T"] == T:
                means.setdefault(int(r["f"]), []).append(float(r["total"]))
        ordered = [np.mean(means[f]) for f in sorted(means)]
        assert ordered[0] <= ordered[1] <= ordered[2]

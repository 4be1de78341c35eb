import io
import math

import numpy as np
import pytest

from oracles import scipy_packing
from parallel_olp.dual_lp import solve_offline_primal
from parallel_olp.instances import Instance, generate_instance
from parallel_olp.metrics import (
    CSV_FIELDS,
    RegretReport,
    aggregate,
    analytic_dual_price_input1,
    estimate_binding_sets,
    offline_solution,
    optimality_gap,
    price_error,
    regret_report,
    violation,
    write_csv,
)
from parallel_olp.policies import PolicyConfig, Trajectory, run_policy


def traj_from(instance, x):
    x = np.asarray(x, dtype=np.int8)
    used = instance.demands.T @ x
    T, m = instance.horizon, instance.resource_count
    return Trajectory(x, np.zeros((T, m)), np.zeros((T, m)), used,
                      float(instance.rewards @ x), 0, None, np.zeros(m))


def greedy_instance():
    return Instance.from_arrays([5.0, 3.0, 1.0], [[1.0], [1.0], [1.0]], [2 / 3])


def test_gap_zero_at_offline_optimum():
    inst = greedy_instance()
    assert optimality_gap(traj_from(inst, [1, 1, 0]), inst) == pytest.approx(0.0, abs=1e-9)


def test_gap_all_reject_equals_optimum():
    inst = generate_instance(80, 2, seed=1)
    V = solve_offline_primal(inst).objective
    rep = regret_report(traj_from(inst, np.zeros(80)), inst)
    assert rep.optimality_gap == V and rep.total == V and rep.violation == 0.0


def test_gap_example():
    inst = greedy_instance()
    assert optimality_gap(traj_from(inst, [0, 0, 1]), inst) == pytest.approx(7.0)


def test_violation_examples():
    inst = Instance.from_arrays(np.ones(2), np.ones((2, 2)), [2.0, 2.0])
    t = traj_from(inst, [0, 0])
    t.consumption = np.array([5.0, 3.0])
    assert violation(t, inst) == 1.0
    t.consumption = np.array([5.0, 5.0])
    assert violation(t, inst) == pytest.approx(math.sqrt(2))


def test_hard_guard_zero_violation():
    inst = generate_instance(300, 3, seed=2)
    traj = run_policy(inst, PolicyConfig(kind="first_order", guard="hard"))
    assert violation(traj, inst) == 0.0


def test_gap_nonnegative_for_feasible_runs():
    for seed in range(5):
        inst = generate_instance(200, 2, seed=seed)
        for kind in ("ahdl", "first_order", "hybrid", "enhanced"):
            traj = run_policy(inst, PolicyConfig(kind=kind, f=6, guard="hard"))
            assert optimality_gap(traj, inst) >= -1e-9


def test_report_total_and_prefix_rejected():
    inst = generate_instance(50, 1, seed=3)
    traj = run_policy(inst, PolicyConfig(kind="hybrid", f=5, guard="theoretical"))
    rep = regret_report(traj, inst)
    assert rep.total == rep.optimality_gap + rep.violation
    assert rep.trial_seed == 3
    assert rep.offline_objective == pytest.approx(
        scipy_packing(inst.rewards, inst.demands, inst.capacity), rel=1e-9)
    short = run_policy(inst, PolicyConfig(kind="hybrid", f=5), steps=20)
    with pytest.raises(ValueError):
        optimality_gap(short, inst)


def test_oracle_cache_keyed_by_content():
    a = generate_instance(60, 2, seed=4)
    b = generate_instance(60, 2, seed=4)
    assert offline_solution(a) is offline_solution(b)
    c = generate_instance(60, 2, seed=5)
    assert offline_solution(c) is not offline_solution(a)


def _rep(total):
    return RegretReport(total, 0.0, 0.0, 0.0)


def test_aggregate_examples():
    one = aggregate([_rep(3.5)])
    assert one.mean_total == 3.5 and one.std_total == 0.0 and one.trial_count == 1
    two = aggregate([_rep(2.0), _rep(4.0)])
    assert two.mean_total == 3.0 and two.std_total == pytest.approx(math.sqrt(2))
    many = aggregate([_rep(1.25)] * 100)
    assert many.std_total == 0.0 and many.trial_count == len(many.per_trial) == 100
    with pytest.raises(ValueError):
        aggregate([])


def test_analytic_price():
    assert analytic_dual_price_input1(1.0) == 0.0
    assert analytic_dual_price_input1(0.5) == 3.75
    assert analytic_dual_price_input1(1 / 3) == pytest.approx(5.0)
    for bad in (0.2, 1.2):
        with pytest.raises(ValueError):
            analytic_dual_price_input1(bad)


def test_analytic_price_monte_carlo():
    # stationarity d = E[a 1(r > a p)] checked by simulation
    rng = np.random.default_rng(0)
    a = 2 * rng.random(400_000)
    r = 10 * rng.random(400_000)
    for d in (0.4, 0.5, 0.8):
        p = analytic_dual_price_input1(d)
        assert np.mean(a * (r > a * p)) == pytest.approx(d, abs=0.005)


def test_binding_sets():
    inst = generate_instance(10, 1, seed=1, d_lo=0.5, d_hi=0.5)
    est = estimate_binding_sets(inst, [3.75], 200_000)
    assert est.binding == [0] and est.non_binding == []
    wide = Instance.from_arrays(np.ones(10), np.ones((10, 1)), [1.5], model="input1")
    est = estimate_binding_sets(wide, [0.0], 50_000)
    assert est.non_binding == [0] and est.estimate[0] == pytest.approx(0.5, abs=0.02)
    multi = generate_instance(10, 3, seed=2)
    est = estimate_binding_sets(multi, [1e6] * 3, 10_000)
    assert est.non_binding == [0, 1, 2] and est.binding == []
    assert sorted(est.binding + est.non_binding) == [0, 1, 2]
    with pytest.raises(ValueError):
        estimate_binding_sets(multi, [-1, 0, 0], 100)


def test_price_error():
    inst = generate_instance(30, 1, seed=0)
    traj = run_policy(inst, PolicyConfig(kind="first_order"))
    assert price_error(traj, [3.75], 1) == pytest.approx(3.75 ** 2)


def test_csv_layout():
    buf = io.StringIO()
    write_csv([{k: i for i, k in enumerate(CSV_FIELDS)} | {"extra": 1}], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "seed,T,m,f,algorithm,gap,violation,total,lp_solves,wall_time"
    assert lines[1] == ",".join(str(i) for i in range(10))

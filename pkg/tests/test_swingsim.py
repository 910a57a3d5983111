import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsmargin.cases import bundled_case, random_scenario, smib_case
from tsmargin.netmodel import FaultScenario, init_internal_emfs, stage_networks
from tsmargin.swingsim import (MachineData, Trajectory, accelerating_power, all_kimbark, diverges,
                               run_scenario, simulate, snap_clearing_time, to_coi,
                               write_coi_csv, write_trajectory_csv)


def smib_oracle_cct(pm=0.9, pmax=1.8, h=5.0, f0=60.0):
    """Closed-form equal-area CCT for fault-on Pe = 0 and post-fault = prefault."""
    m = 2 * h / (2 * math.pi * f0)
    d0 = math.asin(pm / pmax)
    dmax = math.pi - d0
    dc = math.acos((pm * (dmax - d0) + pmax * math.cos(dmax)) / pmax)
    return math.sqrt(2 * m * (dc - d0) / pm)


def test_equilibrium_is_fixed_point():
    case = bundled_case("wscc9")
    init = init_internal_emfs(case)
    sc = FaultScenario(7, 0.0, 1.0)
    nets = stage_networks(case, sc, init)
    nets = {**nets, "fault_on": nets["prefault"], "post_fault": nets["prefault"]}
    traj = simulate(nets, init, MachineData.from_case(case), sc)
    assert np.max(np.abs(traj.delta - init.delta0)) < 1e-9
    assert np.max(np.abs(traj.omega)) < 1e-9
    assert np.max(np.abs(accelerating_power(traj, nets))) < 1e-6


def test_constant_acceleration_during_fault():
    case = smib_case()
    traj, nets = run_scenario(case, FaultScenario(1, 0.2, 0.3))
    m = case.inertia[0]
    c = traj.clear_index
    t = traj.times[:c]
    # the finite fault shunt leaves a residual Pe of order 1e-5 p.u.
    pe = nets["fault_on"].electrical_power(traj.delta[:c])[:, 0]
    assert np.max(np.abs(pe)) < 2e-5
    assert traj.delta[:c, 0] == pytest.approx(traj.delta[0, 0] + 0.9 * t ** 2 / (2 * m), rel=1e-4)
    assert traj.omega[:c, 0] == pytest.approx(0.9 * t / m, rel=1e-4)


def test_smib_matches_equal_area_cct():
    tc = smib_oracle_cct()
    assert tc == pytest.approx(0.225809, abs=1e-6)
    case = smib_case()
    lo = math.floor(tc * 1000) / 1000
    stable, _ = run_scenario(case, FaultScenario(1, lo, 3.0))
    unstable, _ = run_scenario(case, FaultScenario(1, lo + 0.001, 3.0))
    assert not diverges(stable)
    assert diverges(unstable)


def test_clear_sample_duplicated():
    traj, _ = run_scenario(bundled_case("wscc9"), FaultScenario(7, 0.083, 0.5))
    c = traj.clear_index
    assert traj.times[c - 1] == traj.times[c] == pytest.approx(0.083)
    assert np.array_equal(traj.delta[c - 1], traj.delta[c])
    assert traj.stage[c - 1] == "fault_on" and traj.stage[c] == "post_fault"
    assert traj.times[-1] == pytest.approx(0.5)


def test_clearing_time_snapped(caplog):
    assert snap_clearing_time(0.1234, 1e-3) == pytest.approx(0.123)
    assert "snapped" in caplog.text


def test_coi_two_equal_machines():
    md = MachineData((1, 2), np.array([1.0, 1.0]), np.zeros(2), np.zeros(2), 2 * math.pi * 60)
    traj = Trajectory(np.array([0.0]), np.array([[0.2, -0.2]]), np.zeros((1, 2)), 1, md, 0.0)
    coi = to_coi(traj)
    assert coi.delta_coi[0] == pytest.approx(0.0)
    assert coi.theta[0] == pytest.approx([0.2, -0.2])


def test_coi_single_machine():
    md = MachineData((1,), np.array([0.3]), np.zeros(1), np.zeros(1), 2 * math.pi * 60)
    traj = Trajectory(np.arange(3.0), np.array([[0.1], [0.5], [0.9]]), np.array([[0.0], [1.0], [2.0]]),
                      2, md, 1.0)
    coi = to_coi(traj)
    assert np.max(np.abs(coi.theta)) < 1e-15 and np.max(np.abs(coi.omega_tilde)) < 1e-15


@settings(max_examples=30, deadline=None)
@given(m=st.lists(st.floats(0.01, 10.0), min_size=2, max_size=10), seed=st.integers(0, 1000))
def test_coi_weighted_sum_vanishes(m, seed):
    rng = np.random.default_rng(seed)
    n = len(m)
    md = MachineData(tuple(range(n)), np.array(m), np.zeros(n), np.zeros(n), 2 * math.pi * 60)
    traj = Trajectory(np.arange(5.0), rng.normal(size=(5, n)), rng.normal(size=(5, n)), 5, md, 4.0)
    coi = to_coi(traj)
    scale = np.abs(traj.delta).max() * sum(m)
    assert np.max(np.abs(coi.theta @ np.array(m))) <= 1e-12 * scale


@pytest.mark.parametrize("seed", range(4))
def test_coi_identities_on_simulation(seed):
    case, sc = random_scenario(seed)
    traj, nets = run_scenario(case, sc)
    coi = to_coi(traj)
    f = accelerating_power(traj, nets)
    m = traj.inertia
    assert np.max(np.abs(coi.theta @ m) / (np.abs(traj.delta) @ m)) <= 1e-9
    assert np.max(np.abs(coi.omega_tilde @ m) / np.maximum(np.abs(traj.omega) @ m, 1e-300)) <= 1e-9
    pa = np.abs(case.pm) + np.abs(accelerating_power(traj, nets))
    assert np.max(np.abs(f.sum(axis=1)) / pa.sum(axis=1)) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_work_energy_per_stage(seed):
    case, sc = random_scenario(seed)
    traj, nets = run_scenario(case, sc)
    c = traj.clear_index
    for s in all_kimbark(traj, nets).values():
        for lo, hi in ((0, c), (c, c + 400)):
            th, f, w = s.theta[lo:hi], s.f[lo:hi], s.omega[lo:hi]
            work = np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(th))
            assert work == pytest.approx(0.5 * s.inertia * (w[-1] ** 2 - w[0] ** 2), abs=1e-3)


def test_convergence_order():
    # smooth single-stage run: the fault is never cleared
    case = bundled_case("wscc9")
    init = init_internal_emfs(case)
    sc = FaultScenario(5, 0.0, 0.4)
    nets = stage_networks(case, sc, init)
    nets = {**nets, "post_fault": nets["fault_on"]}
    md = MachineData.from_case(case)
    ref = simulate(nets, init, md, sc, 1.25e-4).delta[-1]
    dts = [0.02, 0.01, 0.005]
    errs = [np.max(np.abs(simulate(nets, init, md, sc, dt).delta[-1] - ref)) for dt in dts]
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert order >= 3.5


def test_determinism():
    case = bundled_case("ne39")
    a, _ = run_scenario(case, FaultScenario(21, 0.2, 1.0))
    b, _ = run_scenario(case, FaultScenario(21, 0.2, 1.0))
    assert np.array_equal(a.delta, b.delta) and np.array_equal(a.omega, b.omega)


def test_divergence_oracle():
    case = smib_case()
    assert not diverges(run_scenario(case, FaultScenario(1, 0.1, 2.0))[0])
    assert diverges(run_scenario(case, FaultScenario(1, 0.35, 2.0))[0])


def test_csv_outputs(tmp_path):
    case = bundled_case("wscc9")
    traj, nets = run_scenario(case, FaultScenario(7, 0.1, 0.5))
    write_trajectory_csv(traj, tmp_path / "t.csv", preamble="run")
    write_coi_csv(traj, nets, tmp_path / "c.csv")
    with open(tmp_path / "t.csv") as fh:
        assert fh.readline() == "# run\n"
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "delta_1", "delta_2", "delta_3", "omega_1", "omega_2", "omega_3"]
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == pytest.approx(0.5)
    assert float(rows[1][1]) == pytest.approx(traj.delta[0, 0], rel=1e-14)
    with open(tmp_path / "c.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["t", "delta_coi", "omega_coi"] and "f_3" in header

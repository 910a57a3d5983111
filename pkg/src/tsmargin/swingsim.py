"""Classical multi-machine swing simulation and the COI frame."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netmodel import (FaultScenario, InitialState, NetworkCase, ReducedStageNetwork,
                       init_internal_emfs, stage_networks)

log = logging.getLogger(__name__)

DT_SIM = 1e-3


@dataclass(frozen=True)
class MachineData:
    """Per-machine constants the integrator needs (system base)."""

    ids: tuple[int, ...]
    inertia: np.ndarray
    pm: np.ndarray
    damping: np.ndarray
    omega_s: float

    @classmethod
    def from_case(cls, case: NetworkCase) -> "MachineData":
        return cls(tuple(case.machine_ids), case.inertia, case.pm, case.damping, case.omega_s)

    def index(self, machine: int) -> int:
        try:
            return self.ids.index(machine)
        except ValueError:
            raise KeyError(f"unknown machine {machine}") from None


@dataclass
class Trajectory:
    """Synchronous-frame trajectory across the fault-on and post-fault stages.

    Row ``clear_index`` is the first post-fault sample; it shares its time
    and state with row ``clear_index - 1`` (the last fault-on sample).
    """

    times: np.ndarray
    delta: np.ndarray  # (n_samples, n_machines), rad
    omega: np.ndarray  # deviation from synchronous speed, rad/s
    clear_index: int
    machines: MachineData
    t_clear: float
    blowup_time: float | None = None

    @property
    def n_machines(self) -> int:
        return self.delta.shape[1]

    @property
    def inertia(self) -> np.ndarray:
        return self.machines.inertia

    @property
    def stage(self) -> np.ndarray:
        out = np.full(len(self.times), "post_fault", dtype=object)
        out[:self.clear_index] = "fault_on"
        return out

    @property
    def truncated(self) -> bool:
        return self.blowup_time is not None


@dataclass
class CoiFrame:
    delta_coi: np.ndarray
    omega_coi: np.ndarray
    theta: np.ndarray
    omega_tilde: np.ndarray
    total_inertia: float


@dataclass
class KimbarkSeries:
    machine: int
    t: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    omega: np.ndarray
    inertia: float
    clear_index: int
    stage: np.ndarray = field(repr=False)


def snap_clearing_time(t_clear: float, dt: float) -> float:
    snapped = round(t_clear / dt) * dt
    if abs(snapped - t_clear) > 1e-12:
        log.warning("clearing time %.15g s snapped to %.15g s (step %g s)", t_clear, snapped, dt)
    return snapped


def _rhs(net: ReducedStageNetwork, md: MachineData, delta: np.ndarray, omega: np.ndarray):
    pe = net.electrical_power(delta)
    acc = (md.pm - pe - md.damping * omega / md.omega_s) / md.inertia
    return omega, acc


def _integrate(net: ReducedStageNetwork, md: MachineData, delta: np.ndarray, omega: np.ndarray,
               n_steps: int, dt: float):
    """Fixed-step RK4; stops early at the first non-finite state."""
    ds = np.empty((n_steps + 1, len(delta)))
    ws = np.empty_like(ds)
    ds[0], ws[0] = delta, omega
    with np.errstate(over="ignore", invalid="ignore"):
        return _rk4_steps(net, md, ds, ws, n_steps, dt)


def _rk4_steps(net, md, ds, ws, n_steps, dt):
    for k in range(n_steps):
        d, w = ds[k], ws[k]
        k1d, k1w = _rhs(net, md, d, w)
        k2d, k2w = _rhs(net, md, d + 0.5 * dt * k1d, w + 0.5 * dt * k1w)
        k3d, k3w = _rhs(net, md, d + 0.5 * dt * k2d, w + 0.5 * dt * k2w)
        k4d, k4w = _rhs(net, md, d + dt * k3d, w + dt * k3w)
        ds[k + 1] = d + dt / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
        ws[k + 1] = w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if not (np.all(np.isfinite(ds[k + 1])) and np.all(np.isfinite(ws[k + 1]))):
            return ds[:k + 1], ws[:k + 1], k + 1
    return ds, ws, None


def simulate(networks: dict[str, ReducedStageNetwork], init: InitialState, machines: MachineData,
             scenario: FaultScenario, dt: float = DT_SIM) -> Trajectory:
    if not dt > 0:
        raise ValueError("time step must be positive")
    t_clear = snap_clearing_time(scenario.t_clear, dt)
    n_fault = int(round(t_clear / dt))
    n_post = int(math.ceil((scenario.t_end - t_clear) / dt - 1e-9))

    d1, w1, bad = _integrate(networks["fault_on"], machines, init.delta0, np.zeros(len(init.delta0)),
                             n_fault, dt)
    t1 = np.arange(len(d1)) * dt
    if bad is not None:
        return Trajectory(t1, d1, w1, len(d1), machines, t_clear, blowup_time=bad * dt)
    d2, w2, bad = _integrate(networks["post_fault"], machines, d1[-1], w1[-1], n_post, dt)
    t2 = t_clear + np.arange(len(d2)) * dt
    return Trajectory(
        times=np.concatenate([t1, t2]),
        delta=np.vstack([d1, d2]),
        omega=np.vstack([w1, w2]),
        clear_index=len(t1),
        machines=machines,
        t_clear=t_clear,
        blowup_time=None if bad is None else t_clear + bad * dt,
    )


def run_scenario(case: NetworkCase, scenario: FaultScenario, dt: float = DT_SIM):
    """Build stage networks and simulate; returns (trajectory, networks)."""
    scenario.validate(case)
    init = init_internal_emfs(case)
    nets = stage_networks(case, scenario, init)
    return simulate(nets, init, MachineData.from_case(case), scenario, dt), nets


def to_coi(traj: Trajectory) -> CoiFrame:
    m = traj.inertia
    mt = float(m.sum())
    d_coi = traj.delta @ m / mt
    w_coi = traj.omega @ m / mt
    return CoiFrame(d_coi, w_coi, traj.delta - d_coi[:, None], traj.omega - w_coi[:, None], mt)


def accelerating_power(traj: Trajectory, networks: dict[str, ReducedStageNetwork]) -> np.ndarray:
    """f_i = Pm_i - Pe_i - (M_i/M_T) P_COI for every sample, using each sample's own stage."""
    md = traj.machines
    pe = np.empty_like(traj.delta)
    c = traj.clear_index
    pe[:c] = networks["fault_on"].electrical_power(traj.delta[:c])
    pe[c:] = networks["post_fault"].electrical_power(traj.delta[c:])
    pa = md.pm - pe
    p_coi = pa.sum(axis=1)
    return pa - np.outer(p_coi, md.inertia / md.inertia.sum())


def kimbark_series(traj: Trajectory, networks: dict[str, ReducedStageNetwork], machine: int,
                   coi: CoiFrame | None = None, f: np.ndarray | None = None) -> KimbarkSeries:
    k = traj.machines.index(machine)
    coi = coi if coi is not None else to_coi(traj)
    f = f if f is not None else accelerating_power(traj, networks)
    return KimbarkSeries(machine=machine, t=traj.times, theta=coi.theta[:, k], f=f[:, k],
                         omega=coi.omega_tilde[:, k], inertia=float(traj.inertia[k]),
                         clear_index=traj.clear_index, stage=traj.stage)


def all_kimbark(traj: Trajectory, networks: dict[str, ReducedStageNetwork]) -> dict[int, KimbarkSeries]:
    coi = to_coi(traj)
    f = accelerating_power(traj, networks)
    return {m: kimbark_series(traj, networks, m, coi, f) for m in traj.machines.ids}


def diverges(traj: Trajectory, limit: float = 2 * math.pi) -> bool:
    """Time-domain instability test: angle spread beyond ``limit`` and still growing at the end."""
    if traj.truncated:
        return True
    spread = traj.delta.max(axis=1) - traj.delta.min(axis=1)
    return bool(spread[-1] > limit and spread[-1] > spread[-2])


def _write_csv(path: str | Path, header: list[str], columns: list[np.ndarray],
               preamble: str | None = None) -> None:
    data = np.column_stack(columns)
    with open(path, "w", newline="") as fh:
        if preamble is not None:
            fh.write(f"# {preamble}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([f"{x:.15g}" for x in row])


def write_trajectory_csv(traj: Trajectory, path: str | Path, preamble: str | None = None) -> None:
    """Synchronous-frame angles (rad) and speed deviations (rad/s)."""
    ids = traj.machines.ids
    header = ["t"] + [f"delta_{i}" for i in ids] + [f"omega_{i}" for i in ids]
    _write_csv(path, header, [traj.times, traj.delta, traj.omega], preamble)


def write_coi_csv(traj: Trajectory, networks: dict[str, ReducedStageNetwork], path: str | Path,
                  preamble: str | None = None) -> None:
    """COI-frame angles, speeds and accelerating powers."""
    ids = traj.machines.ids
    coi = to_coi(traj)
    f = accelerating_power(traj, networks)
    header = (["t", "delta_coi", "omega_coi"] + [f"theta_{i}" for i in ids]
              + [f"omega_tilde_{i}" for i in ids] + [f"f_{i}" for i in ids])
    _write_csv(path, header, [traj.times, coi.delta_coi, coi.omega_coi, coi.theta, coi.omega_tilde, f],
               preamble)


def write_kimbark_csv(series: KimbarkSeries, omega_s: float, path: str | Path,
                      preamble: str | None = None) -> None:
    """Kimbark curve samples; speed is written per unit of synchronous speed."""
    _write_csv(path, ["t", "theta_rad", "f_pu", "omega_pu"],
               [series.t, series.theta, series.f, series.omega / omega_s], preamble)

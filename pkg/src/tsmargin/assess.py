"""System-level judgment from the machine-by-machine event stream."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .imeac import DLP, STABLE, UNDETERMINED, UNSTABLE, MachineVerdict, analyze_machine
from .netmodel import FaultScenario, NetworkCase
from .swingsim import CoiFrame, Trajectory, all_kimbark, run_scenario, to_coi, DT_SIM

ALPHA = 0.1
MDM_UNDETERMINED = "undetermined"


class NoCriticalMachines(RuntimeError):
    """No machine accelerated relative to the COI at clearing."""


@dataclass(frozen=True)
class MonitorConfig:
    mode: str = "all_critical"
    monitored: tuple[int, ...] = ()

    @classmethod
    def subset(cls, machines: Iterable[int]) -> "MonitorConfig":
        return cls("subset", tuple(machines))

    def select(self, critical: Sequence[int]) -> list[int]:
        if self.mode == "all_critical":
            return list(critical)
        if self.mode != "subset":
            raise ValueError(f"unknown monitor mode {self.mode!r}")
        if not self.monitored:
            raise ValueError("subset monitoring needs at least one machine")
        extra = sorted(set(self.monitored) - set(critical))
        if extra:
            raise ValueError(f"monitored machines {extra} are not critical")
        return [m for m in critical if m in self.monitored]


@dataclass(frozen=True)
class EventRecord:
    t: float
    machine: int
    kind: str


@dataclass
class SystemAssessment:
    critical: list[int]
    monitored: list[int]
    verdicts: dict[int, MachineVerdict]
    verdict: str
    verdict_time: Optional[float]
    lum: Optional[int]
    leading_losp: Optional[float]
    mdm: list[int] | str
    events: list[EventRecord] = field(default_factory=list)
    sys_complete_time: Optional[float] = None

    @property
    def eta_sys(self) -> list[tuple[int, Optional[float]]]:
        """Margin per critical machine in ascending id order; None where unmonitored or missing."""
        out = []
        for m in sorted(self.critical):
            v = self.verdicts.get(m)
            out.append((m, v.eta if v is not None and v.status != UNDETERMINED else None))
        return out

    @property
    def eta_by_event(self) -> list[tuple[int, float]]:
        return [(e.machine, self.verdicts[e.machine].eta) for e in self.events]

    def to_dict(self) -> dict:
        mdm = self.mdm
        if isinstance(mdm, list):
            mdm = mdm[0] if len(mdm) == 1 else mdm
        return {
            "system_verdict": self.verdict,
            "verdict_time_s": self.verdict_time,
            "leading_losp_s": self.leading_losp,
            "lum": self.lum,
            "mdm": mdm,
            "critical": sorted(self.critical),
            "eta_sys": [{"machine": m, "eta": "N/A" if eta is None else eta} for m, eta in self.eta_sys],
            "events": [{"t": e.t, "machine": e.machine, "kind": e.kind} for e in self.events],
            "machines": [self.verdicts[m].to_dict() for m in sorted(self.verdicts)],
        }


def identify_critical_machines(coi: CoiFrame, clear_index: int, machine_ids: Sequence[int],
                               inertia: np.ndarray, override: Optional[Iterable[int]] = None,
                               alpha: float = ALPHA) -> list[int]:
    """Machines leaving clearing ahead of the COI with a non-negligible kinetic energy share."""
    if override is not None:
        out = list(override)
        unknown = sorted(set(out) - set(machine_ids))
        if unknown:
            raise ValueError(f"unknown machines {unknown}")
        return out
    w = coi.omega_tilde[clear_index]
    ke = 0.5 * inertia * w ** 2
    top = ke.max()
    if not top > 0 or not np.any(w > 0):
        raise NoCriticalMachines("no machine accelerated relative to the COI")
    return [m for k, m in enumerate(machine_ids) if w[k] > 0 and ke[k] >= alpha * top]


def mdm_of(margins: dict[int, float], tol: float = 0.0) -> list[int]:
    """Machines whose margin is within ``tol`` of the minimum (all ties returned)."""
    if not margins:
        raise ValueError("no margins")
    if any(v is None or math.isnan(v) for v in margins.values()):
        raise ValueError("incomplete margins")
    low = min(margins.values())
    return sorted(m for m, v in margins.items() if v <= low + tol)


def assess_system(verdicts: Iterable[MachineVerdict], critical: Sequence[int],
                  config: MonitorConfig = MonitorConfig()) -> SystemAssessment:
    """Reduce per-machine verdicts, in event-time order, to the system judgment."""
    monitored = config.select(critical)
    by_machine = {v.machine: v for v in verdicts if v.machine in monitored}
    missing = sorted(set(monitored) - set(by_machine))
    if missing:
        raise ValueError(f"no verdict for monitored machines {missing}")
    events = sorted(
        (EventRecord(float(v.event.t), v.machine, v.event.kind)
         for v in by_machine.values() if v.event.occurred),
        key=lambda e: (e.t, e.machine),
    )
    verdict, verdict_time, lum = None, None, None
    for e in events:
        if e.kind == DLP and verdict is None:
            verdict, verdict_time, lum = UNSTABLE, e.t, e.machine
    if verdict is None:
        if any(v.status == UNDETERMINED for v in by_machine.values()):
            verdict = UNDETERMINED
        else:
            verdict = STABLE
            verdict_time = events[-1].t if events else None

    complete = (config.mode == "all_critical" or set(monitored) == set(critical)) and all(
        by_machine[m].status != UNDETERMINED for m in critical)
    mdm = mdm_of({m: by_machine[m].eta for m in critical}) if complete else MDM_UNDETERMINED
    return SystemAssessment(
        critical=list(critical),
        monitored=monitored,
        verdicts=by_machine,
        verdict=verdict,
        verdict_time=verdict_time,
        lum=lum,
        leading_losp=verdict_time if verdict == UNSTABLE else None,
        mdm=mdm,
        events=events,
        sys_complete_time=events[-1].t if complete and events else None,
    )


def assess_trajectory(traj: Trajectory, networks, config: MonitorConfig = MonitorConfig(),
                      critical: Optional[Iterable[int]] = None, alpha: float = ALPHA) -> SystemAssessment:
    coi = to_coi(traj)
    omega_crit = identify_critical_machines(coi, traj.clear_index, traj.machines.ids, traj.inertia,
                                            critical, alpha)
    monitored = config.select(omega_crit)
    series = all_kimbark(traj, networks)
    verdicts = [analyze_machine(series[m]) for m in monitored]
    return assess_system(verdicts, omega_crit, config)


def assess_case(case: NetworkCase, scenario: FaultScenario, config: MonitorConfig = MonitorConfig(),
                critical: Optional[Iterable[int]] = None, dt: float = DT_SIM,
                alpha: float = ALPHA) -> tuple[SystemAssessment, Trajectory, dict]:
    traj, nets = run_scenario(case, scenario, dt)
    return assess_trajectory(traj, nets, config, critical, alpha), traj, nets

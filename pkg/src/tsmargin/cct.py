"""Critical clearing time: MDM-monitored scan and a time-domain bisection oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .assess import ALPHA, MonitorConfig, NoCriticalMachines, SystemAssessment, assess_trajectory
from .imeac import DLP, STABLE, UNDETERMINED, UNSTABLE, MachineVerdict, analyze_machine
from .netmodel import FaultScenario, NetworkCase, init_internal_emfs, stage_networks
from .swingsim import DT_SIM, MachineData, diverges, kimbark_series, simulate, to_coi

log = logging.getLogger(__name__)

MDM_TIE_TOL = 0.05


class CctError(RuntimeError):
    pass


@dataclass(frozen=True)
class CctConfig:
    t_start: float
    t_max: float
    dt: float = 0.01
    warmup: int = 2
    policy: str = "mdm_only"
    t_end: float = 3.0
    dt_sim: float = DT_SIM
    alpha: float = ALPHA
    critical: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if not self.t_start < self.t_max:
            raise ValueError("t_start must be below t_max")
        if not self.dt > 0:
            raise ValueError("clearing-time step must be positive")
        if self.policy not in ("mdm_only", "all_critical"):
            raise ValueError(f"unknown monitor policy {self.policy!r}")
        if self.warmup < 1:
            raise ValueError("at least one warmup iteration is needed to fix the MDM")

    def grid(self) -> list[float]:
        n = int(math.floor((self.t_max - self.t_start) / self.dt + 1e-9))
        return [round(self.t_start + k * self.dt, 12) for k in range(n + 1)]


@dataclass
class CctResult:
    cct: Optional[float]
    method: str
    dt: float
    mdm: Optional[list[int]] = None
    lum: Optional[int] = None
    trace: list[tuple[float, float]] = field(default_factory=list)
    policy: Optional[str] = None
    note: str = ""
    trials: list[tuple[float, bool]] = field(default_factory=list)  # oracle: (t_clear, stable)
    analysed: list[tuple[float, MachineVerdict]] = field(default_factory=list, repr=False)

    @property
    def found(self) -> bool:
        return self.cct is not None

    def to_dict(self) -> dict:
        mdm = self.mdm
        if mdm is not None and len(mdm) == 1:
            mdm = mdm[0]
        return {
            "cct_s": self.cct,
            "delta_t_s": self.dt,
            "mdm": mdm,
            "lum": self.lum,
            "method": self.method,
            "policy": self.policy,
            "note": self.note,
            "margin_trace": [{"t_clear_s": t, "eta": eta} for t, eta in self.trace],
            "trials": [{"t_clear_s": t, "stable": ok} for t, ok in self.trials],
        }


class _Runner:
    """Simulates one fault at varying clearing times; reuses the stage networks."""

    def __init__(self, case: NetworkCase, bus: int, trip, config: CctConfig):
        self.case, self.config = case, config
        probe = FaultScenario(bus, config.t_start, config.t_end, trip)
        probe.validate(case)
        self.bus, self.trip = bus, trip
        self.init = init_internal_emfs(case)
        self.nets = stage_networks(case, probe, self.init)
        self.machines = MachineData.from_case(case)

    def trajectory(self, t_clear: float):
        sc = FaultScenario(self.bus, t_clear, self.config.t_end, self.trip)
        return simulate(self.nets, self.init, self.machines, sc, self.config.dt_sim)

    def assess(self, t_clear: float) -> SystemAssessment:
        cfg = self.config
        return assess_trajectory(self.trajectory(t_clear), self.nets, MonitorConfig(),
                                 cfg.critical, cfg.alpha)


def _stable_mdm(a: SystemAssessment, tol: float) -> list[int]:
    margins = {m: v.eta for m, v in a.verdicts.items() if v.status == STABLE}
    low = min(margins.values())
    return sorted(m for m, eta in margins.items() if eta <= low + tol)


def compute_cct_imeac(case: NetworkCase, bus: int, config: CctConfig, trip=None) -> CctResult:
    """Ascending scan; after the warmup only the MDM(s) are analysed."""
    run = _Runner(case, bus, trip, config)
    grid = config.grid()
    trace: list[tuple[float, float]] = []
    policy = config.policy
    mdm: Optional[list[int]] = None
    prev_mdm: Optional[list[int]] = None
    analysed: list[tuple[float, MachineVerdict]] = []

    for k, t in enumerate(grid):
        full = policy == "all_critical" or k < config.warmup or mdm is None
        if full:
            try:
                a = run.assess(t)
            except NoCriticalMachines:
                if k == 0:
                    raise CctError(f"no critical machine at t_start={t}") from None
                raise
            analysed += [(t, v) for v in a.verdicts.values()]
            if a.verdict == UNDETERMINED:
                raise CctError(f"undetermined verdict at t_clear={t}; extend t_end")
            if a.verdict == UNSTABLE:
                if k == 0:
                    raise CctError(f"unstable at t_start={t}; lower t_start")
                unstable_eta = min(v.eta for v in a.verdicts.values() if v.status == UNSTABLE)
                trace.append((t, unstable_eta))
                return CctResult(grid[k - 1], "imeac_mdm", config.dt, prev_mdm, a.lum, trace, policy,
                                 analysed=analysed)
            current = _stable_mdm(a, MDM_TIE_TOL)
            trace.append((t, min(a.verdicts[m].eta for m in current)))
            if k < config.warmup and policy == "mdm_only":
                if prev_mdm is not None and current != prev_mdm:
                    log.warning("MDM changed during warmup (%s -> %s); monitoring all critical machines",
                                prev_mdm, current)
                    policy = "all_critical"
                elif k == config.warmup - 1:
                    mdm = current
            prev_mdm = current
            continue

        traj = run.trajectory(t)
        coi = to_coi(traj)
        verdicts = [analyze_machine(kimbark_series(traj, run.nets, m, coi)) for m in mdm]
        analysed += [(t, v) for v in verdicts]
        if any(v.status == UNDETERMINED for v in verdicts):
            raise CctError(f"MDM undetermined at t_clear={t}; extend t_end")
        eta = min(v.eta for v in verdicts)
        trace.append((t, eta))
        dlps = sorted((v.event.t, v.machine) for v in verdicts if v.event.kind == DLP)
        if dlps:
            return CctResult(grid[k - 1], "imeac_mdm", config.dt, mdm, dlps[0][1], trace, policy,
                             analysed=analysed)
    return CctResult(None, "imeac_mdm", config.dt, mdm, None, trace, policy, note="no CCT in range",
                     analysed=analysed)


def compute_cct_oracle(case: NetworkCase, bus: int, config: CctConfig, trip=None) -> CctResult:
    """Bisection over the clearing-time grid, classifying each trial by angle divergence."""
    run = _Runner(case, bus, trip, config)
    grid = config.grid()
    cache: dict[int, bool] = {}

    def unstable(k: int) -> bool:
        if k not in cache:
            cache[k] = diverges(run.trajectory(grid[k]))
        return cache[k]

    if unstable(0):
        raise CctError(f"unstable at t_start={grid[0]}; lower t_start")
    hi = len(grid) - 1
    if not unstable(hi):
        return CctResult(None, "oracle_bisection", config.dt, note="no CCT in range",
                         trials=[(grid[k], not cache[k]) for k in sorted(cache)])
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    trials = [(grid[k], not cache[k]) for k in sorted(cache)]
    return CctResult(grid[lo], "oracle_bisection", config.dt, trials=trials)


def sign_change_holds(result: CctResult, steps: int = 3) -> bool:
    """eta >= 0 on the grid points within ``steps`` at or below cct, eta < 0 one step above."""
    if result.cct is None:
        return False
    tol = 0.5 * result.dt
    below = [eta for t, eta in result.trace if result.cct - steps * result.dt - tol <= t <= result.cct + tol]
    above = [eta for t, eta in result.trace if abs(t - (result.cct + result.dt)) < tol]
    return bool(below) and all(eta >= 0 for eta in below) and len(above) == 1 and above[0] < 0

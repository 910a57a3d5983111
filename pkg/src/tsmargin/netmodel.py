"""Network ingestion, stage admittance assembly and Kron reduction.

All electrical quantities are held in system-base per unit. Loads are
constant impedances fixed at the prefault voltage, and every stage network
is reduced onto the generator internal (EMF) nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

FAULT_SHUNT = 1e6
STAGES = ("prefault", "fault_on", "post_fault")


class CaseError(ValueError):
    """Invalid network case or scenario data.

    ``field`` names the offending entry (e.g. ``branches[3].to``).
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SingularNetworkError(np.linalg.LinAlgError):
    def __init__(self, nodes: Sequence[int]):
        super().__init__(f"eliminated block is singular; floating node set {list(nodes)}")
        self.nodes = list(nodes)


@dataclass(frozen=True)
class Bus:
    id: int
    vm: float
    va: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    in_service: bool = True

    @property
    def key(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class Generator:
    bus: int
    h: float
    xd_prime: float
    pm: float
    d: float = 0.0

    @property
    def id(self) -> int:
        return self.bus


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...] = ()
    frequency_hz: float = 60.0
    name: str = ""

    def __post_init__(self):
        if not self.base_mva > 0:
            raise CaseError("must be positive", "base_mva")
        if not self.frequency_hz > 0:
            raise CaseError("must be positive", "frequency_hz")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus id", "buses")
        known = set(ids)
        for k, bus in enumerate(self.buses):
            if not bus.vm > 0:
                raise CaseError("prefault voltage magnitude must be positive", f"buses[{k}].vm")
        for k, br in enumerate(self.branches):
            for end, bus in (("from", br.from_bus), ("to", br.to_bus)):
                if bus not in known:
                    raise CaseError(f"unknown bus id {bus}", f"branches[{k}].{end}")
            if br.r == 0 and br.x == 0:
                raise CaseError("zero-impedance branch (r = x = 0)", f"branches[{k}]")
        if not self.generators:
            raise CaseError("at least one generator required", "generators")
        gen_ids = [g.id for g in self.generators]
        if len(set(gen_ids)) != len(gen_ids):
            raise CaseError("one generator per bus (machine id = bus id)", "generators")
        for k, gen in enumerate(self.generators):
            if gen.bus not in known:
                raise CaseError(f"unknown bus id {gen.bus}", f"generators[{k}].bus")
            if not gen.h > 0:
                raise CaseError("inertia constant must be positive", f"generators[{k}].H")
            if not gen.xd_prime > 0:
                raise CaseError("transient reactance must be positive", f"generators[{k}].xd_prime")
        for k, load in enumerate(self.loads):
            if load.bus not in known:
                raise CaseError(f"unknown bus id {load.bus}", f"loads[{k}].bus")

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def machine_ids(self) -> list[int]:
        return [g.id for g in self.generators]

    @property
    def omega_s(self) -> float:
        return 2.0 * math.pi * self.frequency_hz

    @property
    def inertia(self) -> np.ndarray:
        """M_i = 2 H_i / omega_s in p.u. s^2/rad."""
        return np.array([2.0 * g.h / self.omega_s for g in self.generators])

    @property
    def pm(self) -> np.ndarray:
        return np.array([g.pm for g in self.generators])

    @property
    def damping(self) -> np.ndarray:
        return np.array([g.d for g in self.generators])

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def voltages(self) -> np.ndarray:
        return np.array([b.vm * np.exp(1j * b.va) for b in self.buses])

    def find_branch(self, key: tuple[int, int]) -> int:
        for k, br in enumerate(self.branches):
            if br.key == key or br.key == key[::-1]:
                return k
        raise CaseError(f"no branch {key[0]}-{key[1]}", "trip")


@dataclass(frozen=True)
class FaultScenario:
    faulted_bus: int
    t_clear: float
    t_end: float
    tripped_branch: tuple[int, int] | None = None

    def __post_init__(self):
        if self.t_clear < 0:
            raise CaseError("clearing time must be >= 0", "tclear")
        if not self.t_clear < self.t_end:
            raise CaseError("clearing time must precede the horizon", "tclear")

    def validate(self, case: NetworkCase) -> None:
        if self.faulted_bus not in case.bus_index():
            raise CaseError(f"unknown bus id {self.faulted_bus}", "bus")
        if self.tripped_branch is not None:
            k = case.find_branch(self.tripped_branch)
            if not case.branches[k].in_service:
                raise CaseError("tripped branch is already out of service", "trip")


@dataclass(frozen=True)
class ReducedStageNetwork:
    stage: str
    y: np.ndarray = field(repr=False)
    emf: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        n = len(self.emf)
        if self.y.shape != (n, n):
            raise ValueError("reduced matrix dimension must equal generator count")
        scale = max(np.abs(self.y).max(), 1.0)
        if np.abs(self.y - self.y.T).max() > 1e-9 * scale:
            raise ValueError("reduced network is not symmetric")

    @property
    def g(self) -> np.ndarray:
        return self.y.real

    @property
    def b(self) -> np.ndarray:
        return self.y.imag

    def electrical_power(self, delta: np.ndarray) -> np.ndarray:
        """P_ei = sum_j E_i E_j (G_ij cos d_ij + B_ij sin d_ij), vectorised over trailing axes."""
        # delta: (n,) or (n_samples, n)
        v = self.emf * np.exp(1j * np.asarray(delta))
        return np.real(v * np.conj(v @ self.y.T))


@dataclass(frozen=True)
class InitialState:
    emf: np.ndarray
    delta0: np.ndarray
    pe0: np.ndarray


def _branch_stamp(y: np.ndarray, i: int, j: int, br: Branch, sign: float = 1.0) -> None:
    ys = 1.0 / complex(br.r, br.x)
    ysh = 0.5j * br.b
    y[i, i] += sign * (ys + ysh)
    y[j, j] += sign * (ys + ysh)
    y[i, j] -= sign * ys
    y[j, i] -= sign * ys


def network_admittance(case: NetworkCase, *, skip: Iterable[int] = ()) -> np.ndarray:
    """Bus admittance of the branches only (no loads, no fault)."""
    idx = case.bus_index()
    skip = set(skip)
    y = np.zeros((len(case.buses), len(case.buses)), dtype=complex)
    for k, br in enumerate(case.branches):
        if br.in_service and k not in skip:
            _branch_stamp(y, idx[br.from_bus], idx[br.to_bus], br)
    return y


def load_admittances(case: NetworkCase) -> np.ndarray:
    """Constant-impedance shunt per bus, y_L = (P - jQ)/|V|^2 at the prefault voltage."""
    idx = case.bus_index()
    vm = np.array([b.vm for b in case.buses])
    y = np.zeros(len(case.buses), dtype=complex)
    for load in case.loads:
        k = idx[load.bus]
        y[k] += complex(load.p, -load.q) / vm[k] ** 2
    return y


def build_admittance(case: NetworkCase, stage: str, scenario: FaultScenario | None = None) -> np.ndarray:
    """Full bus admittance for one stage, loads folded in as shunts."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if stage != "prefault":
        if scenario is None:
            raise ValueError(f"stage {stage!r} needs a fault scenario")
        scenario.validate(case)
    skip = []
    if stage == "post_fault" and scenario.tripped_branch is not None:
        skip.append(case.find_branch(scenario.tripped_branch))
    y = network_admittance(case, skip=skip)
    y[np.diag_indices_from(y)] += load_admittances(case)
    if stage == "fault_on":
        k = case.bus_index()[scenario.faulted_bus]
        y[k, k] += FAULT_SHUNT
    return y


def kron_reduce(y: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Schur complement of ``y`` onto the ``keep`` nodes (in the given order)."""
    y = np.asarray(y)
    keep = list(keep)
    elim = [k for k in range(y.shape[0]) if k not in set(keep)]
    if not elim:
        return y[np.ix_(keep, keep)].copy()
    ykk = y[np.ix_(keep, keep)]
    yke = y[np.ix_(keep, elim)]
    yek = y[np.ix_(elim, keep)]
    yee = y[np.ix_(elim, elim)]
    floating = _floating_nodes(y, keep, elim)
    if floating:
        raise SingularNetworkError(floating)
    try:
        return ykk - yke @ np.linalg.solve(yee, yek)
    except np.linalg.LinAlgError:
        raise SingularNetworkError(elim) from None


def _floating_nodes(y: np.ndarray, keep: list[int], elim: list[int]) -> list[int]:
    """Eliminated islands with no path to a kept node and no net shunt."""
    yee = y[np.ix_(elim, elim)]
    n_comp, labels = connected_components(np.abs(yee) > 0, directed=False)
    out = []
    for c in range(n_comp):
        members = [elim[k] for k in np.flatnonzero(labels == c)]
        coupled = np.abs(y[np.ix_(members, keep)]).max() > 0 if keep else False
        shunt = abs(y[np.ix_(members, range(y.shape[0]))].sum())
        if not coupled and shunt <= 1e-12 * max(np.abs(y[members]).max(), 1.0):
            out.extend(members)
    return sorted(out)


def augmented_admittance(case: NetworkCase, y_bus: np.ndarray) -> np.ndarray:
    """Internal EMF nodes (first n_gen rows) tied to their terminals through 1/(j x'd)."""
    ng, nb = case.n_gen, len(case.buses)
    idx = case.bus_index()
    y = np.zeros((ng + nb, ng + nb), dtype=complex)
    y[ng:, ng:] = y_bus
    for k, gen in enumerate(case.generators):
        yg = 1.0 / (1j * gen.xd_prime)
        t = ng + idx[gen.bus]
        y[k, k] += yg
        y[t, t] += yg
        y[k, t] -= yg
        y[t, k] -= yg
    return y


def generator_currents(case: NetworkCase) -> np.ndarray:
    """Terminal current of each generator from the prefault balance at its bus."""
    v = case.voltages()
    s_inj = v * np.conj(network_admittance(case) @ v)
    idx = case.bus_index()
    s_load = np.zeros(len(case.buses), dtype=complex)
    for load in case.loads:
        s_load[idx[load.bus]] += complex(load.p, load.q)
    out = np.empty(case.n_gen, dtype=complex)
    for k, gen in enumerate(case.generators):
        j = idx[gen.bus]
        out[k] = np.conj((s_inj[j] + s_load[j]) / v[j])
    return out


def init_internal_emfs(case: NetworkCase, pm_tol: float = 1e-3) -> InitialState:
    """E_i angle delta_i(0) = V_t + j x'd I_gen; checks Pm against the prefault electrical power."""
    idx = case.bus_index()
    v = case.voltages()
    cur = generator_currents(case)
    e = np.array([v[idx[g.bus]] + 1j * g.xd_prime * cur[k] for k, g in enumerate(case.generators)])
    if np.any(np.abs(e) <= 0):
        raise CaseError("non-positive internal EMF; prefault data inconsistent", "generators")
    pe0 = np.real(e * np.conj(cur))
    bad = np.flatnonzero(np.abs(pe0 - case.pm) > pm_tol)
    if bad.size:
        k = int(bad[0])
        raise CaseError(
            f"Pm {case.pm[k]:.6g} disagrees with prefault electrical power {pe0[k]:.6g}",
            f"generators[{k}].Pm",
        )
    return InitialState(emf=np.abs(e), delta0=np.angle(e), pe0=pe0)


def reduce_stage(case: NetworkCase, stage: str, scenario: FaultScenario | None,
                 emf: np.ndarray) -> ReducedStageNetwork:
    y_aug = augmented_admittance(case, build_admittance(case, stage, scenario))
    y_red = kron_reduce(y_aug, range(case.n_gen))
    return ReducedStageNetwork(stage=stage, y=0.5 * (y_red + y_red.T), emf=np.asarray(emf))


def stage_networks(case: NetworkCase, scenario: FaultScenario,
                   init: InitialState | None = None) -> dict[str, ReducedStageNetwork]:
    init = init if init is not None else init_internal_emfs(case)
    return {s: reduce_stage(case, s, scenario, init.emf) for s in STAGES}


# -- case files -------------------------------------------------------------

def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise CaseError("missing field", f"{where}.{key}")
    return obj[key]


def case_from_dict(data: dict) -> NetworkCase:
    base = float(_require(data, "base_mva", "case"))
    buses = tuple(
        Bus(int(_require(b, "id", f"buses[{k}]")), float(_require(b, "vm", f"buses[{k}]")),
            float(_require(b, "va", f"buses[{k}]")))
        for k, b in enumerate(_require(data, "buses", "case"))
    )
    branches = tuple(
        Branch(int(_require(b, "from", f"branches[{k}]")), int(_require(b, "to", f"branches[{k}]")),
               float(_require(b, "r", f"branches[{k}]")), float(_require(b, "x", f"branches[{k}]")),
               float(b.get("b", 0.0)), bool(b.get("in_service", True)))
        for k, b in enumerate(_require(data, "branches", "case"))
    )
    gens = []
    for k, g in enumerate(_require(data, "generators", "case")):
        where = f"generators[{k}]"
        h = float(_require(g, "H", where))
        xd = float(_require(g, "xd_prime", where))
        # machine-base data is rescaled to the system base here
        mbase = g.get("mbase")
        if mbase is not None:
            h *= float(mbase) / base
            xd *= base / float(mbase)
        gens.append(Generator(int(_require(g, "bus", where)), h, xd,
                              float(_require(g, "Pm", where)), float(g.get("D", 0.0))))
    loads = tuple(
        Load(int(_require(l, "bus", f"loads[{k}]")), float(_require(l, "P", f"loads[{k}]")),
             float(_require(l, "Q", f"loads[{k}]")))
        for k, l in enumerate(data.get("loads", []))
    )
    return NetworkCase(base_mva=base, buses=buses, branches=branches, generators=tuple(gens),
                       loads=loads, frequency_hz=float(data.get("frequency_hz", 60.0)),
                       name=str(data.get("name", "")))


def case_to_dict(case: NetworkCase) -> dict:
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "frequency_hz": case.frequency_hz,
        "buses": [{"id": b.id, "vm": b.vm, "va": b.va} for b in case.buses],
        "branches": [{"from": b.from_bus, "to": b.to_bus, "r": b.r, "x": b.x, "b": b.b,
                      "in_service": b.in_service} for b in case.branches],
        "generators": [{"bus": g.bus, "H": g.h, "xd_prime": g.xd_prime, "Pm": g.pm, "D": g.d}
                       for g in case.generators],
        "loads": [{"bus": l.bus, "P": l.p, "Q": l.q} for l in case.loads],
    }


def load_case(path: str | Path) -> NetworkCase:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON at line {exc.lineno}: {exc.msg}", str(path)) from None
    return case_from_dict(data)


def save_case(case: NetworkCase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=1) + "\n")

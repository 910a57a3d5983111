"""Bundled and synthetic network cases."""

from __future__ import annotations

import math
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from .netmodel import (Branch, Bus, Generator, Load, NetworkCase, case_from_dict,
                       network_admittance)

BUNDLED = {"wscc9": "wscc9.json", "ne39": "ne39.json"}


def bundled_case(name: str) -> NetworkCase:
    import json

    text = resources.files("tsmargin").joinpath("data", BUNDLED[name]).read_text()
    return case_from_dict(json.loads(text))


def bundled_case_path(name: str):
    return resources.files("tsmargin").joinpath("data", BUNDLED[name])


def smib_case(pmax: float = 1.8, pm: float = 0.9, h: float = 5.0, x_line: float = 0.2,
              h_inf: float = 1e7, xd_inf: float = 1e-4, frequency_hz: float = 60.0) -> NetworkCase:
    """Machine 1 on bus 1 feeding an infinite bus (machine 2, bus 2) through ``x_line``.

    The machine's transient reactance is tuned so the reduced-network peak
    transfer E1 E2 |B12| equals ``pmax``.
    """
    phi = math.asin(pm * x_line)

    def build(xd: float) -> NetworkCase:
        return NetworkCase(
            base_mva=100.0,
            buses=(Bus(1, 1.0, phi), Bus(2, 1.0, 0.0)),
            branches=(Branch(1, 2, 0.0, x_line),),
            generators=(Generator(1, h, xd, pm), Generator(2, h_inf, xd_inf, -pm)),
            frequency_hz=frequency_hz,
            name="smib",
        )

    def peak(xd: float) -> float:
        return smib_peak_power(build(xd))

    xd = brentq(lambda x: peak(x) - pmax, 1e-3, 10.0, xtol=1e-14, rtol=1e-15)
    return build(xd)


def smib_peak_power(case: NetworkCase) -> float:
    from .netmodel import init_internal_emfs, reduce_stage

    init = init_internal_emfs(case)
    net = reduce_stage(case, "prefault", None, init.emf)
    return float(init.emf[0] * init.emf[1] * abs(net.b[0, 1]))


def synthetic_case(seed: int, n_gen: int, n_load: int | None = None, stress: float = 1.0,
                   max_tries: int = 500) -> NetworkCase:
    """Random connected case whose stored operating point is exact.

    Voltages are drawn first; load buses receive whatever power the
    network draws at those voltages, so no power flow is needed. Draws
    with non-positive loads or generation are rejected. ``stress`` scales
    the drawn angle spread, hence the loading.
    """
    rng = np.random.default_rng(seed)
    n_load = n_load if n_load is not None else max(2, n_gen)
    for _ in range(max_tries):
        case = _draw_case(rng, n_gen, n_load, seed, stress)
        if case is not None:
            return case
    raise RuntimeError(f"no admissible synthetic case for seed {seed}")


def _draw_case(rng: np.random.Generator, n_gen: int, n_load: int, seed: int,
               stress: float) -> NetworkCase | None:
    gen_buses = list(range(1, n_gen + 1))
    load_buses = list(range(n_gen + 1, n_gen + n_load + 1))
    buses = []
    for b in gen_buses:
        buses.append(Bus(b, rng.uniform(1.0, 1.05), stress * rng.uniform(0.05, 0.35)))
    for b in load_buses:
        buses.append(Bus(b, rng.uniform(0.95, 1.02), stress * rng.uniform(-0.25, 0.0)))

    branches = []
    # load buses: a random spanning tree plus a few chords
    for k in range(1, n_load):
        branches.append((load_buses[k], load_buses[rng.integers(0, k)]))
    for _ in range(n_load // 2):
        a, b = rng.choice(load_buses, size=2, replace=False)
        if (a, b) not in branches and (b, a) not in branches:
            branches.append((int(a), int(b)))
    for g in gen_buses:
        branches.append((g, int(rng.choice(load_buses))))
    brs = tuple(
        Branch(a, b, r=rng.uniform(0.002, 0.01), x=rng.uniform(0.05, 0.15), b=rng.uniform(0.0, 0.1))
        for a, b in branches
    )
    gens = [Generator(g, h=rng.uniform(3.0, 12.0), xd_prime=rng.uniform(0.15, 0.35), pm=0.0)
            for g in gen_buses]
    probe = NetworkCase(base_mva=100.0, buses=tuple(buses), branches=brs, generators=tuple(gens))
    v = probe.voltages()
    s_inj = v * np.conj(network_admittance(probe) @ v)
    loads = []
    for k, b in enumerate(load_buses):
        s = -s_inj[n_gen + k]
        if s.real <= 0.05 * stress:
            return None
        loads.append(Load(b, s.real, s.imag))
    pm = s_inj[:n_gen].real
    if np.any(pm <= 0.1 * stress):
        return None
    gens = tuple(Generator(g.bus, g.h, g.xd_prime, float(pm[k])) for k, g in enumerate(gens))
    return NetworkCase(base_mva=100.0, buses=tuple(buses), branches=brs, generators=gens,
                       loads=tuple(loads), name=f"synthetic-{n_gen}m-seed{seed}")


SUITE_STRESS = 0.5


def random_scenario(seed: int, stress: float = SUITE_STRESS, t_end: float = 3.0):
    """One randomized (case, scenario) pair: 3-10 machines, D = 0, a bus fault without tripping."""
    from .netmodel import FaultScenario

    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(3, 11))
    case = synthetic_case(seed, n, stress=stress)
    bus = int(rng.choice([b.id for b in case.buses]))
    t_clear = round(float(rng.uniform(0.05, 0.4)), 3)
    return case, FaultScenario(bus, t_clear, t_end)

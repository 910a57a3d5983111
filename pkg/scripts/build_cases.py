"""Regenerate the bundled case files under src/tsmargin/data/.

Solves a polar power flow (scipy root finding) for the WSCC 9-bus and the
New England 39-bus data so each JSON file carries a consistent prefault
operating point. Transformer off-nominal taps are dropped: the branch
model has no tap field, so the 39-bus file is a New-England-style case,
not a replica.

    python scripts/build_cases.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.optimize import root

from tsmargin.netmodel import (Branch, Bus, Generator, Load, NetworkCase, network_admittance,
                               save_case)

DATA = Path(__file__).resolve().parents[1] / "src" / "tsmargin" / "data"

WSCC9 = dict(
    name="wscc9",
    branches=[(1, 4, 0.0, 0.0576, 0.0), (4, 5, 0.010, 0.085, 0.176), (4, 6, 0.017, 0.092, 0.158),
              (5, 7, 0.032, 0.161, 0.306), (6, 9, 0.039, 0.170, 0.358), (7, 8, 0.0085, 0.072, 0.149),
              (8, 9, 0.0119, 0.1008, 0.209), (2, 7, 0.0, 0.0625, 0.0), (3, 9, 0.0, 0.0586, 0.0)],
    loads={5: (125.0, 50.0), 6: (90.0, 30.0), 8: (100.0, 35.0)},
    # bus: (P MW or None for slack, |V|, H s, x'd p.u.), 100 MVA base
    gens={1: (None, 1.04, 23.64, 0.0608), 2: (163.0, 1.025, 6.40, 0.1198),
          3: (85.0, 1.025, 3.01, 0.1813)},
    slack=1,
)

NE39 = dict(
    name="ne39",
    branches=[
        (1, 2, 0.0035, 0.0411, 0.6987), (1, 39, 0.0010, 0.0250, 0.7500), (2, 3, 0.0013, 0.0151, 0.2572),
        (2, 25, 0.0070, 0.0086, 0.1460), (3, 4, 0.0013, 0.0213, 0.2214), (3, 18, 0.0011, 0.0133, 0.2138),
        (4, 5, 0.0008, 0.0128, 0.1342), (4, 14, 0.0008, 0.0129, 0.1382), (5, 6, 0.0002, 0.0026, 0.0434),
        (5, 8, 0.0008, 0.0112, 0.1476), (6, 7, 0.0006, 0.0092, 0.1130), (6, 11, 0.0007, 0.0082, 0.1389),
        (7, 8, 0.0004, 0.0046, 0.0780), (8, 9, 0.0023, 0.0363, 0.3804), (9, 39, 0.0010, 0.0250, 1.2000),
        (10, 11, 0.0004, 0.0043, 0.0729), (10, 13, 0.0004, 0.0043, 0.0729), (13, 14, 0.0009, 0.0101, 0.1723),
        (14, 15, 0.0018, 0.0217, 0.3660), (15, 16, 0.0009, 0.0094, 0.1710), (16, 17, 0.0007, 0.0089, 0.1342),
        (16, 19, 0.0016, 0.0195, 0.3040), (16, 21, 0.0008, 0.0135, 0.2548), (16, 24, 0.0003, 0.0059, 0.0680),
        (17, 18, 0.0007, 0.0082, 0.1319), (17, 27, 0.0013, 0.0173, 0.3216), (21, 22, 0.0008, 0.0140, 0.2565),
        (22, 23, 0.0006, 0.0096, 0.1846), (23, 24, 0.0022, 0.0350, 0.3610), (25, 26, 0.0032, 0.0323, 0.5130),
        (26, 27, 0.0014, 0.0147, 0.2396), (26, 28, 0.0043, 0.0474, 0.7802), (26, 29, 0.0057, 0.0625, 1.0290),
        (28, 29, 0.0014, 0.0151, 0.2490),
        (12, 11, 0.0016, 0.0435, 0.0), (12, 13, 0.0016, 0.0435, 0.0), (6, 31, 0.0000, 0.0250, 0.0),
        (10, 32, 0.0000, 0.0200, 0.0), (19, 33, 0.0007, 0.0142, 0.0), (20, 34, 0.0009, 0.0180, 0.0),
        (22, 35, 0.0000, 0.0143, 0.0), (23, 36, 0.0005, 0.0272, 0.0), (25, 37, 0.0006, 0.0232, 0.0),
        (2, 30, 0.0000, 0.0181, 0.0), (29, 38, 0.0008, 0.0156, 0.0), (19, 20, 0.0007, 0.0138, 0.0),
    ],
    loads={3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0), 8: (522.0, 176.0), 12: (7.5, 88.0),
           15: (320.0, 153.0), 16: (329.0, 32.3), 18: (158.0, 30.0), 20: (628.0, 103.0),
           21: (274.0, 115.0), 23: (247.5, 84.6), 24: (308.6, -92.0), 25: (224.0, 47.2),
           26: (139.0, 17.0), 27: (281.0, 75.5), 28: (206.0, 27.6), 29: (283.5, 26.9),
           31: (9.2, 4.6), 39: (1104.0, 250.0)},
    gens={30: (250.0, 1.0475, 42.0, 0.0310), 31: (None, 0.9820, 30.3, 0.0697),
          32: (650.0, 0.9831, 35.8, 0.0531), 33: (632.0, 0.9972, 28.6, 0.0436),
          34: (508.0, 1.0123, 26.0, 0.1320), 35: (650.0, 1.0493, 34.8, 0.0500),
          36: (560.0, 1.0635, 26.4, 0.0490), 37: (540.0, 1.0278, 24.3, 0.0570),
          38: (830.0, 1.0265, 34.5, 0.0570), 39: (1000.0, 1.0300, 500.0, 0.0060)},
    slack=31,
)


def solve(spec: dict, base: float = 100.0) -> NetworkCase:
    bus_ids = sorted({b for br in spec["branches"] for b in br[:2]})
    branches = tuple(Branch(f, t, r, x, b) for f, t, r, x, b in spec["branches"])
    probe = NetworkCase(base_mva=base, buses=tuple(Bus(b, 1.0, 0.0) for b in bus_ids),
                        branches=branches, generators=(Generator(spec["slack"], 1.0, 1.0, 0.0),))
    y = network_admittance(probe)
    idx = {b: k for k, b in enumerate(bus_ids)}
    n = len(bus_ids)
    p_load = np.zeros(n)
    q_load = np.zeros(n)
    for b, (p, q) in spec["loads"].items():
        p_load[idx[b]], q_load[idx[b]] = p / base, q / base
    p_gen = np.zeros(n)
    vset = {}
    for b, (p, vm, _, _) in spec["gens"].items():
        vset[idx[b]] = vm
        if p is not None:
            p_gen[idx[b]] = p / base
    slack = idx[spec["slack"]]
    pq = [k for k in range(n) if k not in vset]
    ang_unknown = [k for k in range(n) if k != slack]

    def unpack(x):
        va = np.zeros(n)
        vm = np.array([vset.get(k, 1.0) for k in range(n)])
        va[ang_unknown] = x[:len(ang_unknown)]
        vm[pq] = x[len(ang_unknown):]
        return vm, va

    def mismatch(x):
        vm, va = unpack(x)
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        dp = s.real - (p_gen - p_load)
        dq = s.imag + q_load
        return np.concatenate([dp[ang_unknown], dq[pq]])

    x0 = np.concatenate([np.zeros(len(ang_unknown)), np.ones(len(pq))])
    sol = root(mismatch, x0, method="lm", options={"xtol": 1e-15, "ftol": 1e-15})
    assert np.abs(mismatch(sol.x)).max() < 1e-10, sol.message
    vm, va = unpack(sol.x)
    v = vm * np.exp(1j * va)
    s = v * np.conj(y @ v)
    gens = []
    for b, (_, _, h, xd) in sorted(spec["gens"].items()):
        k = idx[b]
        gens.append(Generator(b, h, xd, float(s[k].real + p_load[k])))
    buses = tuple(Bus(b, float(vm[idx[b]]), float(va[idx[b]])) for b in bus_ids)
    loads = tuple(Load(b, p / base, q / base) for b, (p, q) in sorted(spec["loads"].items()))
    return NetworkCase(base_mva=base, buses=buses, branches=branches, generators=tuple(gens),
                       loads=loads, name=spec["name"])


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for spec in (WSCC9, NE39):
        case = solve(spec)
        save_case(case, DATA / f"{spec['name']}.json")
        print(spec["name"], "Pm:", [round(g.pm, 4) for g in case.generators])


if __name__ == "__main__":
    main()

"""CCT of every bus fault on a bundled case, by both methods.

    python scripts/cct_sweep.py --case ne39 --range 0.05:0.60:0.01
"""

from __future__ import annotations

import argparse
import logging

from tsmargin.cases import bundled_case
from tsmargin.cct import CctConfig, CctError, compute_cct_imeac, compute_cct_oracle, sign_change_holds
from tsmargin.cli import parse_range


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", default="ne39", choices=("wscc9", "ne39"))
    p.add_argument("--range", default="0.05:0.60:0.01")
    p.add_argument("--buses", help="comma-separated bus ids (default: all)")
    args = p.parse_args()
    logging.basicConfig(level=logging.ERROR)

    case = bundled_case(args.case)
    t0, t1, dt = parse_range(args.range)
    cfg = CctConfig(t0, t1, dt)
    buses = [int(b) for b in args.buses.split(",")] if args.buses else [b.id for b in case.buses]
    print(f"{'bus':>4} {'imeac':>6} {'oracle':>6} {'agree':>5} {'sign':>5} {'policy':>12}  mdm / lum")
    n_agree = 0
    for bus in buses:
        try:
            a = compute_cct_imeac(case, bus, cfg)
            o = compute_cct_oracle(case, bus, cfg)
        except CctError as exc:
            print(f"{bus:>4}  skipped: {exc}")
            continue
        agree = a.cct == o.cct
        n_agree += agree
        print(f"{bus:>4} {a.cct!s:>6} {o.cct!s:>6} {agree!s:>5} {sign_change_holds(a)!s:>5} "
              f"{a.policy:>12}  {a.mdm} / {a.lum}")
    print(f"agreement on {n_agree}/{len(buses)} buses")


if __name__ == "__main__":
    main()

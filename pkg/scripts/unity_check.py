"""Compare the machine-by-machine system verdict with the angle-divergence oracle
over the randomized scenario suite.

    python scripts/unity_check.py --seeds 40 --stress 0.5
"""

from __future__ import annotations

import argparse
from collections import Counter

from tsmargin.assess import assess_trajectory
from tsmargin.cases import random_scenario
from tsmargin.swingsim import diverges, run_scenario


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=40)
    p.add_argument("--stress", type=float, default=0.5)
    args = p.parse_args()

    tally = Counter()
    for seed in range(args.seeds):
        case, sc = random_scenario(seed, stress=args.stress)
        traj, nets = run_scenario(case, sc)
        a = assess_trajectory(traj, nets)
        div = diverges(traj)
        tally[a.verdict] += 1
        flag = ""
        if a.verdict != "undetermined" and (a.verdict == "unstable") != div:
            tally["disagree"] += 1
            flag = "  <-- disagrees"
        print(f"seed {seed:3d}  n={case.n_gen:2d}  bus={sc.faulted_bus:3d}  tc={sc.t_clear:.3f}  "
              f"{a.verdict:>12}  diverges={div!s:5}  lum={a.lum}  mdm={a.mdm}{flag}")
    print(dict(tally))


if __name__ == "__main__":
    main()

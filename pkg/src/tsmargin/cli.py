"""Command-line front end: ``tsmargin simulate | assess | cct``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 method disagreement.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .assess import ALPHA, MonitorConfig, NoCriticalMachines, assess_trajectory
from .cct import CctConfig, CctError, compute_cct_imeac, compute_cct_oracle
from .imeac import AnalysisError
from .netmodel import CaseError, FaultScenario, NetworkCase, SingularNetworkError, load_case
from .swingsim import (DT_SIM, all_kimbark, run_scenario, write_coi_csv, write_kimbark_csv,
                       write_trajectory_csv)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_DISAGREE = 0, 2, 3, 4

log = logging.getLogger("tsmargin")


class InputError(ValueError):
    """Bad command-line input; ``field`` names the offending flag or key."""

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class FaultSpec:
    bus: int
    t_clear: Optional[float] = None
    trip: Optional[tuple[int, int]] = None
    text: str = ""


@dataclass
class RunManifest:
    command: str
    case_path: str
    fault: str
    params: dict[str, Any]
    monitor: dict[str, Any]
    outputs: list[str]
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    numerical_failure: Optional[dict[str, Any]] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_line(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, allow_nan=False)


def parse_fault(text: str, need_tclear: bool = True) -> FaultSpec:
    """Parse ``bus=<id>,tclear=<s>[,trip=<from>-<to>]``."""
    items: dict[str, str] = {}
    for part in text.split(","):
        if "=" not in part:
            raise InputError(f"expected key=value, got {part!r}", "fault")
        key, value = (s.strip() for s in part.split("=", 1))
        if key not in ("bus", "tclear", "trip"):
            raise InputError(f"unknown key {key!r}", "fault")
        if key in items:
            raise InputError(f"duplicate key {key!r}", f"fault.{key}")
        items[key] = value
    if "bus" not in items:
        raise InputError("missing bus id", "fault.bus")
    try:
        bus = int(items["bus"])
    except ValueError:
        raise InputError(f"not an integer: {items['bus']!r}", "fault.bus") from None
    t_clear = None
    if "tclear" in items:
        try:
            t_clear = float(items["tclear"])
        except ValueError:
            raise InputError(f"not a number: {items['tclear']!r}", "fault.tclear") from None
        if not math.isfinite(t_clear) or t_clear < 0:
            raise InputError("must be a finite non-negative time", "fault.tclear")
    elif need_tclear:
        raise InputError("missing clearing time", "fault.tclear")
    trip = None
    if "trip" in items:
        ends = items["trip"].split("-")
        try:
            if len(ends) != 2:
                raise ValueError
            trip = (int(ends[0]), int(ends[1]))
        except ValueError:
            raise InputError(f"expected <from>-<to>, got {items['trip']!r}", "fault.trip") from None
    return FaultSpec(bus, t_clear, trip, text)


def parse_range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"expected t_start:t_max:dt, got {text!r}", "range")
    try:
        a, b, d = (float(p) for p in parts)
    except ValueError:
        raise InputError(f"non-numeric entry in {text!r}", "range") from None
    if not all(math.isfinite(x) for x in (a, b, d)) or a < 0 or not a < b or not d > 0:
        raise InputError("need 0 <= t_start < t_max and dt > 0", "range")
    return a, b, d


def parse_ids(text: Optional[str], name: str) -> Optional[tuple[int, ...]]:
    if text is None:
        return None
    try:
        ids = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise InputError(f"expected comma-separated machine ids, got {text!r}", name) from None
    if not ids:
        raise InputError("empty machine list", name)
    return ids


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_report(path: Path, body: dict, manifest: RunManifest) -> None:
    doc = {"manifest": manifest.to_dict(), **body}
    path.write_text(json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n")


def _load(args) -> NetworkCase:
    try:
        return load_case(args.case)
    except FileNotFoundError:
        raise InputError(f"no such file {args.case}", "case") from None


def _scenario(case: NetworkCase, spec: FaultSpec, t_end: float) -> FaultScenario:
    sc = FaultScenario(spec.bus, spec.t_clear, t_end, spec.trip)
    sc.validate(case)
    return sc


def _check_dt(value: float, name: str) -> None:
    if not (math.isfinite(value) and value > 0):
        raise InputError("must be positive", name)


def cmd_simulate(args) -> int:
    case = _load(args)
    spec = parse_fault(args.fault)
    _check_dt(args.dt_sim, "dt-sim")
    sc = _scenario(case, spec, args.tend)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "trajectory.csv", out / "coi.csv"]
    manifest = RunManifest("simulate", str(args.case), spec.text,
                           {"dt_sim": args.dt_sim, "t_end": args.tend}, {}, [str(p) for p in paths])
    traj, nets = run_scenario(case, sc, args.dt_sim)
    if traj.truncated:
        manifest.numerical_failure = {"blowup_time_s": traj.blowup_time}
    write_trajectory_csv(traj, paths[0], manifest.to_line())
    write_coi_csv(traj, nets, paths[1], manifest.to_line())
    if traj.truncated:
        log.error("integration blew up at t=%.6g s; partial trajectory written", traj.blowup_time)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_assess(args) -> int:
    case = _load(args)
    spec = parse_fault(args.fault)
    _check_dt(args.dt_sim, "dt-sim")
    sc = _scenario(case, spec, args.tend)
    monitor_ids = parse_ids(args.monitor, "monitor")
    critical = parse_ids(args.critical, "critical")
    config = MonitorConfig.subset(monitor_ids) if monitor_ids else MonitorConfig()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "assess_report.json"
    manifest = RunManifest(
        "assess", str(args.case), spec.text,
        {"dt_sim": args.dt_sim, "t_end": args.tend, "alpha": args.alpha},
        {"mode": config.mode, "monitored": list(config.monitored),
         "critical_override": list(critical) if critical else None},
        [str(report_path)])

    traj, nets = run_scenario(case, sc, args.dt_sim)
    if traj.truncated:
        manifest.numerical_failure = {"blowup_time_s": traj.blowup_time}
    try:
        a = assess_trajectory(traj, nets, config, critical, args.alpha)
    except NoCriticalMachines as exc:
        raise InputError(str(exc), "fault") from None
    except ValueError as exc:
        if isinstance(exc, AnalysisError):
            raise
        raise InputError(str(exc), "monitor" if monitor_ids else "critical") from None

    series = all_kimbark(traj, nets)
    kimbark_paths = [out / f"kimbark_{m}.csv" for m in a.monitored]
    manifest.outputs += [str(p) for p in kimbark_paths]
    for m, p in zip(a.monitored, kimbark_paths):
        write_kimbark_csv(series[m], case.omega_s, p, manifest.to_line())
    write_report(report_path, a.to_dict(), manifest)
    return EXIT_NUMERIC if traj.truncated else EXIT_OK


def cmd_cct(args) -> int:
    case = _load(args)
    spec = parse_fault(args.fault, need_tclear=False)
    if args.range is None:
        raise InputError("required", "range")
    t_start, t_max, dt = parse_range(args.range)
    _check_dt(args.dt_sim, "dt-sim")
    if args.warmup < 1:
        raise InputError("must be at least 1", "warmup")
    critical = parse_ids(args.critical, "critical")
    config = CctConfig(t_start, t_max, dt, args.warmup, args.policy, args.tend, args.dt_sim,
                       args.alpha, critical)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "cct_report.json"
    manifest = RunManifest(
        "cct", str(args.case), spec.text,
        {"dt_sim": args.dt_sim, "t_end": args.tend, "alpha": args.alpha, "warmup": args.warmup,
         "range": [t_start, t_max, dt]},
        {"policy": args.policy, "critical_override": list(critical) if critical else None},
        [str(report_path)])
    try:
        _scenario(case, FaultSpec(spec.bus, t_start, spec.trip), args.tend)
        result = compute_cct_imeac(case, spec.bus, config, spec.trip)
        body: dict[str, Any] = {"imeac_mdm": result.to_dict()}
        agree = None
        if args.verify:
            oracle = compute_cct_oracle(case, spec.bus, config, spec.trip)
            body["oracle_bisection"] = oracle.to_dict()
            agree = _same_grid_point(result.cct, oracle.cct, dt)
        body["agreement"] = agree
    except (CctError, NoCriticalMachines) as exc:
        raise InputError(str(exc), "range") from None
    write_report(report_path, body, manifest)
    if agree is False:
        log.error("methods disagree: imeac_mdm %s s, oracle %s s", result.cct, body["oracle_bisection"]["cct_s"])
        return EXIT_DISAGREE
    return EXIT_OK


def _same_grid_point(a: Optional[float], b: Optional[float], dt: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) < 0.5 * dt


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsmargin", description="Transient-stability margins and CCT "
                                "from individual-machine equal-area analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fault_help):
        sp.add_argument("--case", required=True, help="network case JSON file")
        sp.add_argument("--fault", required=True, help=fault_help)
        sp.add_argument("--tend", type=float, default=3.0, help="simulation horizon, s (default 3.0)")
        sp.add_argument("--dt-sim", type=float, default=DT_SIM, help="integration step, s (default 1e-3)")
        sp.add_argument("--out-dir", default=".", help="directory for output files")

    sim = sub.add_parser("simulate", help="simulate one fault; write trajectory and COI CSVs")
    common(sim, "bus=<id>,tclear=<s>[,trip=<from>-<to>]")

    ass = sub.add_parser("assess", help="machine-by-machine assessment of one fault")
    common(ass, "bus=<id>,tclear=<s>[,trip=<from>-<to>]")
    ass.add_argument("--monitor", help="comma-separated subset of critical machines to monitor")
    ass.add_argument("--critical", help="comma-separated override of the critical machine set")
    ass.add_argument("--alpha", type=float, default=ALPHA, help="kinetic-energy share for criticality")

    cct = sub.add_parser("cct", help="critical clearing time of one fault location")
    common(cct, "bus=<id>[,trip=<from>-<to>] (tclear is ignored)")
    cct.add_argument("--range", help="clearing-time grid t_start:t_max:dt, s")
    cct.add_argument("--warmup", type=int, default=2, help="all-critical iterations that fix the MDM")
    cct.add_argument("--policy", choices=("mdm_only", "all_critical"), default="mdm_only")
    cct.add_argument("--critical", help="comma-separated override of the critical machine set")
    cct.add_argument("--alpha", type=float, default=ALPHA)
    cct.add_argument("--verify", action="store_true", help="also run the time-domain bisection oracle")
    return p


COMMANDS = {"simulate": cmd_simulate, "assess": cmd_assess, "cct": cmd_cct}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, CaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularNetworkError, AnalysisError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

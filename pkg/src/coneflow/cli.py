"""Command-line front end: scenario ingestion and artifact emission.

One invocation runs one command against one scenario and writes its
report, flat CSV, and figure into the output directory.  Exit codes:
0 success / verification pass, 1 verification failure, 2 input error,
3 numerical inconclusiveness.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import plots, scenarios
from .degree import degree_rhs
from .errors import (BoundaryZeroError, InconclusiveError, InputError,
                     NumericalError, TangencyViolationError)
from .harness import boundary_exclusion_scan, verify
from .integrator import funnel, solve
from .setmaps import tangent_selection

COMMANDS = ("verify", "degree", "simulate", "funnel", "scan")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coneflow",
        description="Constrained-inclusion degree and return-map "
                    "verification runs.")
    p.add_argument("--command", choices=COMMANDS,
                   help="what to run against the scenario")
    p.add_argument("--scenario",
                   help="bundled scenario name or path to a JSON file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="replace the scenario seed list with this seed")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override a scenario entry (dotted keys, JSON values)")
    p.add_argument("--list-scenarios", action="store_true",
                   help="print bundled scenario names and exit")
    return p


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _load(args):
    if args.scenario in scenarios.bundled_names():
        cfg = scenarios.bundled_config(args.scenario)
    else:
        cfg = scenarios.load_scenario_file(args.scenario)
    cfg = scenarios.apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg["seeds"] = [int(args.seed)]
    return scenarios.build_scenario(cfg)


def _cmd_verify(s, out: str) -> int:
    rep = verify(s)
    _write(os.path.join(out, "report.json"), rep.to_json() + "\n")
    _write(os.path.join(out, "report.csv"), rep.to_csv())
    plots.plot_report(rep, os.path.join(out, "report.png"))
    status = "PASS" if rep.passed else "FAIL"
    star = "none" if rep.t_star is None else f"{rep.t_star:g}"
    print(f"{s.name}: field degree {rep.rhs_value}, t_star {star} -> {status}")
    return 0 if rep.passed else 1


def _cmd_degree(s, out: str) -> int:
    cert = degree_rhs(s.op, s.F, s.K, s.region, s.sweep_pairs(),
                      seed=s.seeds[0])
    _write(os.path.join(out, "degree.json"), cert.to_json() + "\n")
    lines = ["param,value"]
    lines += [f"{e['param']},{e['value']}" for e in cert.stability]
    _write(os.path.join(out, "degree.csv"), "\n".join(lines) + "\n")
    plots.plot_degree(cert, os.path.join(out, "degree.png"))
    print(f"{s.name}: constrained degree {cert.value} "
          f"(residual floor {cert.min_boundary_residual:.3e})")
    return 0


def _require_state(s):
    if s.initial_state is None:
        raise InputError(f"scenario {s.name} has no initial_state")


def _cmd_simulate(s, out: str) -> int:
    _require_state(s)
    if s.t_end is None:
        raise InputError(f"scenario {s.name} has no t_end")
    g = tangent_selection(s.F, s.K, alpha=s.sweeps["alpha"][-1],
                          seed=s.seeds[0])
    traj = solve(s.op, s.K, g, s.initial_state, s.t_end, s.sweeps["h_step"])
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    plots.plot_trajectory(traj, os.path.join(out, "trajectory.png"))
    print(f"{s.name}: {len(traj.times) - 1} steps to t={traj.times[-1]:g}, "
          f"max set distance {traj.distances.max():.3e}")
    return 0


def _cmd_funnel(s, out: str) -> int:
    _require_state(s)
    t = s.t_end if s.t_end is not None else max(s.sweeps["t"])
    sample = funnel(s.op, s.K, s.F, s.initial_state, t, s.sweeps["h_step"],
                    strategies=s.strategies, alpha=s.sweeps["alpha"][-1])
    if not sample.trajectories:
        raise NumericalError("every funnel strategy failed: "
                             + "; ".join(f"{k}: {v}"
                                         for k, v in sample.failures.items()))
    lines = ["strategy," + ",".join(f"u_{i+1}" for i in range(s.K.dim))]
    for name in sample.strategies:
        tr = sample.trajectories.get(name)
        if tr is None:
            continue
        lines.append(name + ","
                     + ",".join(repr(float(v)) for v in tr.final_state))
    _write(os.path.join(out, "funnel.csv"), "\n".join(lines) + "\n")
    import json as _json

    payload = {
        "scenario": s.name, "t": float(t),
        "endpoints": {name: [float(v) for v in tr.final_state]
                      for name, tr in sample.trajectories.items()},
        "failures": dict(sample.failures),
    }
    _write(os.path.join(out, "funnel.json"),
           _json.dumps(payload, sort_keys=True, indent=2) + "\n")
    plots.plot_funnel(sample, s.K.dim, os.path.join(out, "funnel.png"))
    ends = sample.endpoints()
    spread = 0.0
    if len(ends) > 1:
        spread = max(float(np.linalg.norm(a - b))
                     for a in ends for b in ends)
    print(f"{s.name}: {len(sample.trajectories)} strategies, "
          f"endpoint spread {spread:.3e}, {len(sample.failures)} failures")
    return 0


def _cmd_scan(s, out: str) -> int:
    rep = boundary_exclusion_scan(s)
    _write(os.path.join(out, "scan.json"), rep.to_json() + "\n")
    _write(os.path.join(out, "scan.csv"), rep.to_csv())
    plots.plot_scan(rep, os.path.join(out, "scan.png"))
    if rep.flagged_t:
        flagged = ", ".join(f"{t:g}" for t in rep.flagged_t)
        print(f"{s.name}: boundary return floor {rep.global_floor:.3e}; "
              f"flagged horizons: {flagged}")
    else:
        print(f"{s.name}: boundary return floor {rep.global_floor:.3e}; "
              f"all horizons excluded")
    return 0


_DISPATCH = {
    "verify": _cmd_verify,
    "degree": _cmd_degree,
    "simulate": _cmd_simulate,
    "funnel": _cmd_funnel,
    "scan": _cmd_scan,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    if args.list_scenarios:
        for name in scenarios.bundled_names():
            print(name)
        return 0
    if not args.command or not args.scenario:
        parser.print_usage(sys.stderr)
        print("coneflow: --command and --scenario are required",
              file=sys.stderr)
        return 2
    try:
        s = _load(args)
        os.makedirs(args.out, exist_ok=True)
        return _DISPATCH[args.command](s, args.out)
    except (InputError, TangencyViolationError) as err:
        print(f"coneflow: input error: {err}", file=sys.stderr)
        return 2
    except InconclusiveError as err:
        print(f"coneflow: inconclusive: {err}", file=sys.stderr)
        if err.table:
            for entry in err.table:
                print(f"  {entry}", file=sys.stderr)
        return 3
    except (BoundaryZeroError, NumericalError) as err:
        print(f"coneflow: numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

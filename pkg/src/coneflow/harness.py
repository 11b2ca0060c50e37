"""Verification harness matching field degree against return-map indices.

The pipeline freezes the inclusion at time zero, computes the
constrained degree of A x + F(0,x) over the region by the resolvent
sweep, then computes the fixed-point index of the time-t return map for
each horizon in a decreasing sweep.  Verification passes when the three
smallest horizons all reproduce the degree.  Two companion scans probe
the hypotheses behind that match: return maps on the relative boundary
must stay away from their base point (boundary exclusion), and the
discrete homotopy chain linking the return map to the one-step update
must be fixed-point-free on the boundary (bridge check).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .convex import ConvexSet
from .degree import (DegreeCertificate, OpenRegion, _project_batch,
                     degree_rhs, fixed_point_index)
from .errors import BoundaryZeroError, InconclusiveError, InputError
from .integrator import (HomotopyFlowSpec, funnel, homotopy_flow, poincare,
                         poincare_batch)
from .setmaps import (SetValuedMap, hull_map, max_difference_quotient,
                      tangent_selection)

_SWEEP_KEYS = {"t", "h_degree", "alpha", "h_step"}


def _decreasing_positive(values, label):
    vals = [float(v) for v in values]
    if not vals or any(v <= 0 for v in vals):
        raise InputError(f"{label} sweep must be positive, got {vals}")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise InputError(f"{label} sweep must be strictly decreasing")
    return vals


@dataclass
class Scenario:
    """One verification problem: operator, constraint set, map, region."""

    name: str
    op: object
    K: ConvexSet
    F: SetValuedMap
    region: OpenRegion
    sweeps: dict
    seeds: list = field(default_factory=lambda: [0, 1])
    expected_degree: int | None = None
    initial_state: np.ndarray | None = None
    t_end: float | None = None
    strategies: list | None = None

    def __post_init__(self):
        missing = _SWEEP_KEYS - set(self.sweeps)
        if missing:
            raise InputError(f"sweeps missing keys: {sorted(missing)}")
        extra = set(self.sweeps) - _SWEEP_KEYS
        if extra:
            raise InputError(f"unknown sweep keys: {sorted(extra)}")
        self.sweeps = dict(self.sweeps)
        self.sweeps["t"] = _decreasing_positive(self.sweeps["t"], "t")
        self.sweeps["h_degree"] = _decreasing_positive(
            self.sweeps["h_degree"], "h_degree")
        alphas = [float(a) for a in self.sweeps["alpha"]]
        if not alphas or any(a <= 0 for a in alphas):
            raise InputError("alpha sweep must be positive")
        self.sweeps["alpha"] = alphas
        h_step = float(self.sweeps["h_step"])
        if h_step <= 0:
            raise InputError("h_step must be positive")
        self.sweeps["h_step"] = h_step
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise InputError("at least one seed is required")
        if self.region.K is not self.K:
            raise InputError("region must be built on the scenario set")
        if self.initial_state is not None:
            self.initial_state = np.asarray(self.initial_state, dtype=float)

    def sweep_pairs(self):
        """(alpha, h) pairs for the degree sweep; singletons broadcast."""
        alphas = self.sweeps["alpha"]
        hs = self.sweeps["h_degree"]
        if len(alphas) == len(hs):
            return list(zip(alphas, hs))
        if len(alphas) == 1:
            return [(alphas[0], h) for h in hs]
        if len(hs) == 1:
            return [(a, hs[0]) for a in alphas]
        raise InputError("alpha and h_degree sweeps must zip or broadcast")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _is_set_valued(F: SetValuedMap, probe_point) -> bool:
    if len(F.generators) > 1:
        return True
    return F.radius_at(0.0, probe_point) > 0.0


@dataclass
class VerificationReport:
    scenario: str
    rhs_value: int
    rhs_certificate: dict
    index_table: list
    t_star: float | None
    passed: bool
    expected_degree: int | None
    selection_quotient: float
    funnel_guard_floor: float | None
    notes: list

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rhs_value": int(self.rhs_value),
            "rhs_certificate": self.rhs_certificate,
            "index_table": self.index_table,
            "t_star": self.t_star,
            "passed": bool(self.passed),
            "expected_degree": self.expected_degree,
            "selection_quotient": self.selection_quotient,
            "funnel_guard_floor": self.funnel_guard_floor,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["t,h,alpha,index,residual,rhs_value,pass"]
        for row in self.index_table:
            lines.append(",".join(_fmt(row[k]) for k in
                                  ("t", "h", "alpha", "index", "residual",
                                   "rhs_value", "pass")))
        return "\n".join(lines) + "\n"


def verify(s: Scenario, tol=1e-9, margin=2.0, retraction="metric",
           scheme="projected_resolvent") -> VerificationReport:
    """Match the right-hand-side degree against return-map indices.

    Requires a nonexpansive linear part (growth constant exactly 1);
    scenarios violating that are rejected rather than silently run.
    """
    if s.op.growth_M != 1.0:
        raise InputError(
            f"verification requires growth constant 1, got {s.op.growth_M}; "
            "expansive semigroup bounds are outside the certified regime")
    notes = []
    seed0 = s.seeds[0]
    pairs = s.sweep_pairs()
    cert = degree_rhs(s.op, s.F, s.K, s.region, pairs, seed=seed0,
                      margin=margin, retraction=retraction, tol=tol)
    d0 = cert.value
    alpha_sel = pairs[-1][0]
    g = tangent_selection(s.F, s.K, alpha=alpha_sel, seed=seed0, verify=False)
    h_step = s.sweeps["h_step"]
    rows = []
    for t in s.sweeps["t"]:

        def p_t(x, t=t):
            return poincare(s.op, s.K, g, x, t, h_step, scheme=scheme)

        def p_t_batch(X, t=t):
            return poincare_batch(s.op, s.K, g, X, t, h_step, scheme=scheme)

        row = {"t": t, "h": h_step, "alpha": alpha_sel, "index": None,
               "residual": 0.0, "rhs_value": d0, "pass": False, "note": ""}
        try:
            tc = fixed_point_index(p_t, s.region, tol=tol, margin=margin,
                                   retraction=retraction,
                                   extra_params={"t": t, "h": h_step},
                                   f_batch=p_t_batch)
            row["index"] = tc.value
            row["residual"] = tc.min_boundary_residual
            row["pass"] = tc.value == d0
        except BoundaryZeroError as err:
            row["note"] = f"boundary fixed point: {err}"
        except InconclusiveError as err:
            row["note"] = f"inconclusive index: {err}"
        rows.append(row)

    agree = 0
    for row in reversed(rows):
        if row["index"] is not None and row["index"] == d0:
            agree += 1
        else:
            break
    passed = agree >= 3
    t_star = rows[len(rows) - agree]["t"] if agree > 0 else None
    if s.expected_degree is not None and d0 != s.expected_degree:
        passed = False
        notes.append(f"degree {d0} differs from expected {s.expected_degree}")

    ref = s.region.interior_reference()
    probe_pts = list(s.region.boundary_mesh(level=0)) + [ref]
    quotient = max_difference_quotient(g, 0.0, probe_pts)

    guard_floor = None
    if _is_set_valued(s.F, ref):
        t_small = s.sweeps["t"][-1]
        floor = np.inf
        for x in s.region.boundary_mesh(level=0):
            sample = funnel(s.op, s.K, s.F, x, t_small, h_step,
                            strategies=s.strategies, alpha=alpha_sel,
                            scheme=scheme)
            for p in sample.endpoints():
                floor = min(floor, float(np.linalg.norm(x - p)))
            for name, why in sample.failures.items():
                notes.append(f"funnel strategy {name} failed: {why}")
        guard_floor = float(floor)
        if guard_floor <= tol:
            passed = False
            notes.append("funnel endpoint returned to a boundary point")

    return VerificationReport(
        scenario=s.name, rhs_value=d0, rhs_certificate=cert.to_dict(),
        index_table=rows, t_star=t_star, passed=passed,
        expected_degree=s.expected_degree,
        selection_quotient=float(quotient),
        funnel_guard_floor=guard_floor, notes=notes)


def _dedup_generators(generators, dim, probes):
    """Drop generators indistinguishable from an earlier one at the probes.

    Time hulls of autonomous maps produce many coincident branches; the
    scan only needs one representative per distinct branch.  Detection
    is sample-based, so branches that differ only away from the probes
    are merged, which coarsens the diagnostic but never breaks it.
    """
    keep = []
    sigs = []
    for g in generators:
        sig = np.concatenate([
            np.asarray(g(t, x), dtype=float).reshape(dim) for t, x in probes])
        dup = any(np.allclose(sig, s, rtol=0.0,
                              atol=1e-12 * (1.0 + np.abs(s).max()))
                  for s in sigs)
        if not dup:
            keep.append(g)
            sigs.append(sig)
    return keep


def _batch_return_floors(op, K, g, mesh, t_samples, h, scheme):
    """Min distance from each horizon's returns to the start points.

    All mesh points integrate in lockstep; sample horizons are inserted
    as exact nodes of the step grid, so no interpolation is involved.
    """
    samples = sorted({float(t) for t in t_samples})
    if samples[0] <= 0:
        raise InputError("scan horizons must be positive")
    T = samples[-1]
    nodes = {round(k * h, 12) for k in range(1, int(np.floor(T / h + 1e-9)) + 1)}
    nodes |= set(samples)
    times = sorted(nodes)
    X0 = np.asarray(mesh, dtype=float)
    U = X0.copy()
    floors = {}
    solvers = {}
    sample_set = set(samples)
    t_prev = 0.0
    for t_node in times:
        dt = t_node - t_prev
        if dt > 1e-13 * max(h, 1.0):
            W = np.array([g(t_prev, u) for u in U])
            if scheme == "projected_resolvent":
                key = round(dt, 15)
                if key not in solvers:
                    solvers[key] = op.resolvent_solver(dt)
                V = solvers[key]((U + dt * W).T).T
            elif scheme == "projected_semigroup":
                V = (U + dt * W) @ op.semigroup_matrix(dt).T
            else:
                raise InputError(f"unknown scheme {scheme!r}")
            U = _project_batch(K, V)
            t_prev = t_node
        if t_node in sample_set:
            floors[t_node] = float(np.min(np.linalg.norm(U - X0, axis=1)))
    return floors


@dataclass
class BoundaryExclusionReport:
    scenario: str
    threshold: float
    rows: list
    per_t_floor: dict
    flagged_t: list
    global_floor: float
    params: dict

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "threshold": self.threshold,
            "rows": self.rows,
            "per_t_floor": {repr(k): v for k, v in self.per_t_floor.items()},
            "flagged_t": self.flagged_t, "global_floor": self.global_floor,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["t,z,floor,excluded"]
        for row in self.rows:
            lines.append(",".join(_fmt(row[k])
                                  for k in ("t", "z", "floor", "excluded")))
        return "\n".join(lines) + "\n"


def boundary_exclusion_scan(s: Scenario, T=None, z_samples=(0.0, 0.5, 1.0),
                            t_samples=None, h=None, threshold=1e-2,
                            scheme="projected_resolvent",
                            mesh_level=0) -> BoundaryExclusionReport:
    """Scan return maps on the relative boundary for near-returns.

    The field is deformed along G(z, x) = (1-z) f(x) + z Fhat(T, x),
    where f is the frozen tangent selection and Fhat the time-hull of
    the map up to horizon T (twice the largest sweep horizon by
    default).  For each (z, t) the reported floor is the smallest
    distance from a boundary point to its funnel of time-t returns; a
    floor at or below the threshold flags that horizon.  A zero floor is
    a finding, not an error.
    """
    if T is None:
        T = 2.0 * max(s.sweeps["t"])
    if t_samples is None:
        t_samples = sorted(s.sweeps["t"])
    if h is None:
        h = s.sweeps["h_step"]
    alpha = s.sweeps["alpha"][-1]
    seed0 = s.seeds[0]
    f0 = tangent_selection(s.F, s.K, alpha=alpha, seed=seed0, verify=False)
    hull = hull_map(s.F, T)
    probes = [(tt, s.K.project(s.region.interior_reference() + dx))
              for tt in (0.0, 0.5 * T, T)
              for dx in (0.0, 0.37 * s.region.diam())]
    gens = _dedup_generators(hull.generators, s.F.dim, probes)
    has_radius = hull.radius is not None

    def make_gz(z):
        mix = [
            lambda t, x, gen=gen, z=z: ((1.0 - z) * np.asarray(f0(t, x), float)
                                        + z * np.asarray(gen(t, x), float))
            for gen in gens
        ]
        rad = (lambda t, x, z=z: z * hull.radius_at(t, x)) if has_radius else None
        return SetValuedMap(s.F.dim, mix, radius=rad)

    mesh = s.region.boundary_mesh(mesh_level)
    rows = []
    per_t = {float(t): np.inf for t in t_samples}
    for z in [float(z) for z in z_samples]:
        Gz = make_gz(z)
        multi = _is_set_valued(Gz, s.region.interior_reference())
        if multi:
            floors = {float(t): np.inf for t in t_samples}
            for t in floors:
                for x in mesh:
                    sample = funnel(s.op, s.K, Gz, x, t, h,
                                    strategies=s.strategies, alpha=alpha,
                                    scheme=scheme)
                    for p in sample.endpoints():
                        floors[t] = min(floors[t],
                                        float(np.linalg.norm(x - p)))
        else:
            gz = tangent_selection(Gz, s.K, alpha=alpha, seed=seed0,
                                   verify=False)
            floors = _batch_return_floors(s.op, s.K, gz, mesh, t_samples, h,
                                          scheme)
        for t in sorted(floors):
            rows.append({"t": t, "z": z, "floor": floors[t],
                         "excluded": floors[t] > threshold})
            per_t[t] = min(per_t[t], floors[t])
    flagged = [t for t, v in sorted(per_t.items()) if v <= threshold]
    return BoundaryExclusionReport(
        scenario=s.name, threshold=float(threshold), rows=rows,
        per_t_floor=per_t, flagged_t=flagged,
        global_floor=float(min(per_t.values())) if per_t else np.inf,
        params={"T": float(T), "h": float(h), "alpha": alpha, "seed": seed0,
                "scheme": scheme, "mesh_points": int(len(mesh))})


@dataclass
class BridgeReport:
    scenario: str
    t: float
    h: float
    stage1: list
    stage2: list
    stage1_floor: float
    stage2_floor: float
    identity_max: float
    continuity: list
    passed: bool
    params: dict

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "t": self.t, "h": self.h,
            "stage1": self.stage1, "stage2": self.stage2,
            "stage1_floor": self.stage1_floor,
            "stage2_floor": self.stage2_floor,
            "identity_max": self.identity_max,
            "continuity": self.continuity, "passed": bool(self.passed),
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["stage,z,residual"]
        for row in self.stage1:
            lines.append(f"1,{_fmt(row['z'])},{_fmt(row['floor'])}")
        for row in self.stage2:
            lines.append(f"2,{_fmt(row['z'])},{_fmt(row['floor'])}")
        return "\n".join(lines) + "\n"


def homotopy_bridge_check(s: Scenario, t: float, h: float, z_samples=None,
                          identity_samples=1000,
                          mesh_level=0) -> BridgeReport:
    """Certify the two-stage homotopy from the return map to the update map.

    Stage one deforms the flow field from the original right-hand side
    (z=1) to the shifted update field -x + g(x) (z=0), checking that no
    boundary point returns to itself at horizon t.  Stage two contracts
    that flow onto the update map g through

        (1 - c) x + c * flow_{z t}(x)  at the z=0 field,
        c = 1 / (z (t + z - z t)),

    whose z->0 limit is g itself; boundary residuals of the retracted
    map are scanned over z.  Both floors strictly positive certifies the
    chain return-map ~ shifted flow ~ update map free of boundary fixed
    points at this resolution.
    """
    if z_samples is None:
        z_samples = np.linspace(0.0, 1.0, 21)
    t = float(t)
    h = float(h)
    if t <= 0:
        raise InputError("bridge horizon must be positive")
    alpha = s.sweeps["alpha"][-1]
    seed0 = s.seeds[0]
    sel = tangent_selection(s.F, s.K, alpha=alpha, seed=seed0, verify=False)
    f0 = lambda x: sel(0.0, x)
    mesh = s.region.boundary_mesh(mesh_level)
    if len(mesh) == 0:
        raise InputError("region has no boundary mesh inside the set")

    stage1 = []
    for z in [float(z) for z in z_samples]:
        spec = HomotopyFlowSpec(s.op, s.K, f0, h, z)
        floor = min(float(np.linalg.norm(x - homotopy_flow(spec, x, t)))
                    for x in mesh)
        stage1.append({"z": z, "floor": floor})

    spec0 = HomotopyFlowSpec(s.op, s.K, f0, h, 0.0)

    def psi_hat(z, x):
        if z == 0.0:
            return spec0.g(x)
        c = 1.0 / (z * (t + z - z * t))
        return (1.0 - c) * x + c * homotopy_flow(spec0, x, z * t)

    stage2 = []
    for z in [float(z) for z in z_samples]:
        floor = min(float(np.linalg.norm(x - s.K.project(psi_hat(z, x))))
                    for x in mesh)
        stage2.append({"z": z, "floor": floor})

    rng = np.random.default_rng(seed0 + 20240)
    ident = 0.0
    for _ in range(int(identity_samples)):
        x = s.K.project(rng.normal(size=s.K.dim))
        spec = HomotopyFlowSpec(s.op, s.K, f0, h, float(rng.uniform()))
        ident = max(ident, spec.identity_residual(x))

    continuity = []
    for z in (1e-1, 1e-2, 1e-3, 1e-4):
        gap = max(float(np.linalg.norm(psi_hat(z, x) - spec0.g(x)))
                  for x in mesh)
        continuity.append({"z": z, "gap": gap})

    floor1 = min(r["floor"] for r in stage1)
    floor2 = min(r["floor"] for r in stage2)
    passed = floor1 > 0.0 and floor2 > 0.0
    return BridgeReport(
        scenario=s.name, t=t, h=h, stage1=stage1, stage2=stage2,
        stage1_floor=floor1, stage2_floor=floor2, identity_max=float(ident),
        continuity=continuity, passed=passed,
        params={"alpha": alpha, "seed": seed0,
                "mesh_points": int(len(mesh)),
                "identity_samples": int(identity_samples)})

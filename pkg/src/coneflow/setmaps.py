"""Set-valued right-hand sides and tangent selections.

A map value at (t, x) is the convex hull of finitely many generator
evaluations plus an optional ball.  Pointwise (scalar) reactions lift to
grid maps acting coordinatewise; their values are exact coordinate
products, so membership, distance, and tangency all factor.

The tangent selection realizes a single-valued right-hand side inside
both the map value and the constraint set's tangent cone.  The rule is
deterministic: take the seed point (hull barycenter by default, a fixed
generator or a seeded random convex combination for funnel sampling) and
move to the nearest admissible point when the seed itself is not.
"""

from __future__ import annotations

import numpy as np

from .convex import (_ACTIVITY_DEFAULT, Box, Product, hull_distance,
                     tangent_feasible_point)
from .errors import InputError, TangencyViolationError


def _as_radius(radius):
    if radius is None:
        return None
    if callable(radius):
        return radius
    r = float(radius)
    if r < 0:
        raise InputError("ball radius must be nonnegative")
    if r == 0.0:
        return None
    return lambda t, x: r


class SetValuedMap:
    """conv{gamma_j(t, x)} + rho(t, x) * unit ball."""

    def __init__(self, dim, generators, radius=None, growth_c=None):
        generators = list(generators)
        if not generators:
            raise InputError("need at least one generator")
        self.dim = int(dim)
        self.generators = generators
        self.radius = _as_radius(radius)
        self.growth_c = growth_c

    def radius_at(self, t, x) -> float:
        return 0.0 if self.radius is None else float(self.radius(t, x))

    def evaluate(self, t, x):
        """Generator matrix (m, dim) and ball radius at (t, x)."""
        x = np.asarray(x, dtype=float)
        pts = np.array([np.asarray(g(t, x), dtype=float).reshape(self.dim)
                        for g in self.generators])
        return pts, self.radius_at(t, x)

    def value_distance(self, t, x, w) -> float:
        """Distance from w to the value set at (t, x)."""
        pts, rho = self.evaluate(t, x)
        return max(0.0, hull_distance(pts, np.asarray(w, dtype=float)) - rho)

    def support(self, t, x, direction) -> float:
        d = np.asarray(direction, dtype=float)
        pts, rho = self.evaluate(t, x)
        return float((pts @ d).max() + rho * np.linalg.norm(d))

    def hull(self, t, x, time_samples=9):
        """Value of the time-hull conv of values over [0, t] at the point x.

        Realized on a uniform time grid; the radius is the sampled max.
        """
        if time_samples < 2:
            raise InputError("need at least two time samples")
        grid = np.linspace(0.0, t, time_samples)
        pts = []
        rho = 0.0
        for s in grid:
            p, r = self.evaluate(s, x)
            pts.append(p)
            rho = max(rho, r)
        return np.vstack(pts), rho


def hull_map(F: SetValuedMap, T: float, time_samples=9) -> SetValuedMap:
    """Autonomous map whose value at x is the time-hull of F over [0, T]."""
    grid = np.linspace(0.0, T, time_samples)
    gens = [
        (lambda t, x, g=g, s=s: g(s, x))
        for g in F.generators
        for s in grid
    ]
    if F.radius is None:
        rad = None
    else:
        rad = lambda t, x: max(F.radius_at(s, x) for s in grid)
    return SetValuedMap(F.dim, gens, radius=rad, growth_c=F.growth_c)


class PointwiseReaction:
    """Scalar reaction applied at every grid coordinate.

    Generators take (t, y) with y scalar or vector and evaluate
    elementwise.
    """

    def __init__(self, generators, radius=None, growth_c=None):
        self.generators = list(generators)
        if not self.generators:
            raise InputError("need at least one pointwise generator")
        self.radius = _as_radius(radius)
        self.growth_c = growth_c


class GridProductMap(SetValuedMap):
    """Coordinatewise lift of a pointwise reaction to a grid of size m.

    The value is the exact product of the pointwise values; the lifted
    generators are the coordinatewise images of the pointwise ones, and
    distances and tangency computations factor through the coordinates.
    """

    def __init__(self, reaction: PointwiseReaction, grid_dim: int):
        if reaction.radius is not None:
            raise InputError("grid lifts support zero pointwise radius only")
        # pointwise bound c(1+|y|) per coordinate gives c*sqrt(m)(1+|u|)
        # for the stacked 2-norm
        growth = reaction.growth_c
        if growth is not None:
            growth = float(growth) * float(np.sqrt(grid_dim))

        def lift(gen):
            def lifted(t, u):
                u = np.asarray(u, dtype=float)
                out = np.asarray(gen(t, u), dtype=float)
                if out.ndim == 0:
                    out = np.full(u.shape, float(out))
                return out

            return lifted

        super().__init__(grid_dim, [lift(g) for g in reaction.generators],
                         radius=None, growth_c=growth)
        self.reaction = reaction

    def pointwise_values(self, t, u):
        """(m_generators, grid_dim) array of pointwise generator values."""
        u = np.asarray(u, dtype=float)
        rows = []
        for g in self.generators:
            rows.append(g(t, u))
        return np.array(rows)

    def value_distance(self, t, x, w) -> float:
        vals = self.pointwise_values(t, x)
        w = np.asarray(w, dtype=float)
        lo = vals.min(axis=0)
        hi = vals.max(axis=0)
        gaps = np.maximum(np.maximum(lo - w, w - hi), 0.0)
        return float(np.linalg.norm(gaps))


def nemytskii_lift(reaction: PointwiseReaction, grid_dim: int) -> GridProductMap:
    return GridProductMap(reaction, grid_dim)


def _box_bounds(K):
    """(lo, hi) arrays when K is a box or a product of boxes, else None."""
    if isinstance(K, Box):
        return K.lo, K.hi
    if isinstance(K, Product):
        parts = [_box_bounds(f) for f in K.factors]
        if any(p is None for p in parts):
            return None
        return (np.concatenate([p[0] for p in parts]),
                np.concatenate([p[1] for p in parts]))
    return None


class Selection:
    """Deterministic single-valued selection tangent to the constraint set.

    mode is one of "barycenter", ("vertex", j), or ("random", seed); the
    mode fixes the seed point inside the value hull.  The returned
    velocity always lies in the value set and satisfies the active cone
    constraints to the stated tolerance; the accuracy margin alpha is
    recorded but not consumed.
    """

    def __init__(self, F: SetValuedMap, K, alpha=1e-2, mode="barycenter",
                 tol=1e-9):
        self.map = F
        self.set = K
        self.alpha = float(alpha)
        self.tol = float(tol)
        self.mode = mode
        m = len(F.generators)
        if mode == "barycenter":
            self._weights = None
        elif isinstance(mode, tuple) and mode[0] == "vertex":
            j = int(mode[1])
            if not 0 <= j < m:
                raise InputError(f"vertex index {j} out of range for {m} generators")
            w = np.zeros(m)
            w[j] = 1.0
            self._weights = w
        elif isinstance(mode, tuple) and mode[0] == "random":
            rng = np.random.default_rng(int(mode[1]))
            self._weights = rng.dirichlet(np.ones(m))
        else:
            raise InputError(f"unknown selection mode {mode!r}")
        self._bounds = _box_bounds(K) if isinstance(F, GridProductMap) else None
        # single-point values in a full space need no cone machinery
        self._trivial = (self._bounds is None and m == 1
                         and F.radius is None
                         and getattr(K, "is_full_space", False))

    def _seed(self, pts):
        if self._weights is None:
            return None
        return self._weights @ pts

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if self._trivial:
            return np.asarray(self.map.generators[0](t, x),
                              dtype=float).reshape(self.map.dim)
        if self.set.distance(x) > 1e-7 * (1.0 + np.linalg.norm(x)):
            raise InputError("selection queried outside the constraint set")
        if self._bounds is not None:
            return self._componentwise(t, x)
        pts, rho = self.map.evaluate(t, x)
        cone = self.set.tangent_cone(x)
        seed = self._seed(pts)
        if seed is not None:
            scale = 1.0 + float(np.abs(pts).max())
            if cone.full_space or cone.contains(seed, tol=1e-12 * scale):
                return seed
        w = tangent_feasible_point(cone, pts, rho, seed_point=seed, tol=self.tol)
        if w is None:
            err = TangencyViolationError(t, x)
            raise err
        return w

    def batch(self, t, P):
        """Selection values for the rows of a point matrix.

        Semantically identical to calling the selection row by row; rows
        safely interior to a box-like set skip the cone machinery, rows
        near a face fall back to the pointwise path.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        gens = self.map.generators
        if self._trivial:
            g = gens[0]
            return np.array([np.asarray(g(t, p), dtype=float).reshape(self.map.dim)
                             for p in P])
        kb = _box_bounds(self.set)
        if self._bounds is None and kb is not None:
            lo, hi = kb
            norms = np.linalg.norm(P, axis=1)
            dist = np.linalg.norm(P - np.clip(P, lo, hi), axis=1)
            if np.any(dist > 1e-7 * (1.0 + norms)):
                raise InputError("selection queried outside the constraint set")
            # margin of ten activity widths keeps the mask conservative
            margin = 10.0 * _ACTIVITY_DEFAULT * (1.0 + norms)[:, None]
            interior = np.all((P > lo + margin) & (P < hi - margin), axis=1)
            out = np.empty((P.shape[0], self.map.dim))
            for i, p in enumerate(P):
                if interior[i]:
                    pts = np.array([g(t, p) for g in gens], dtype=float)
                    seed = self._seed(pts)
                    out[i] = np.mean(pts, axis=0) if seed is None else seed
                else:
                    out[i] = self(t, p)
            return out
        return np.array([self(t, p) for p in P])

    def _componentwise(self, t, u):
        """Exact coordinatewise solve for grid lifts over box constraints."""
        lo, hi = self._bounds
        vals = self.map.pointwise_values(t, u)
        a = vals.min(axis=0)
        b = vals.max(axis=0)
        if self._weights is None:
            seed = vals.mean(axis=0)
        else:
            seed = self._weights @ vals
        atol = 1e-9 * (1.0 + np.abs(u).max())
        at_lo = np.isfinite(lo) & (u <= lo + atol)
        at_hi = np.isfinite(hi) & (u >= hi - atol)
        c_lo = np.where(at_lo, 0.0, -np.inf)
        c_hi = np.where(at_hi, 0.0, np.inf)
        f_lo = np.maximum(a, c_lo)
        f_hi = np.minimum(b, c_hi)
        bad = f_lo > f_hi + self.tol
        if np.any(bad):
            raise TangencyViolationError(t, u)
        return np.clip(seed, f_lo, f_hi)


def tangent_selection(F: SetValuedMap, K, alpha=1e-2, seed=0, mode=None,
                      verify=True, tol=1e-9) -> Selection:
    """Build a tangent selection of F over K.

    seed 0 keeps the barycenter rule; a nonzero seed draws a fixed random
    convex weighting, giving an alternative admissible selection.  A
    small verification sample is solved eagerly so empty tangency
    intersections surface at construction time.
    """
    if mode is None:
        mode = "barycenter" if seed == 0 else ("random", seed)
    sel = Selection(F, K, alpha=alpha, mode=mode, tol=tol)
    if verify:
        rng = np.random.default_rng(12345)
        base = K.interior_point()
        for tt in (0.0, 0.5):
            for _ in range(3):
                x = K.project(base + 0.1 * rng.standard_normal(F.dim))
                sel(tt, x)
    return sel


def husc_probe(F: SetValuedMap, t0, x0, deltas, n_samples=64, seed=0):
    """Hausdorff excess of sampled nearby values over the value at (t0, x0).

    Diagnostic only: small excesses for shrinking deltas are consistent
    with upper semicontinuity at the probe point, never a proof.
    """
    x0 = np.asarray(x0, dtype=float)
    pts0, rho0 = F.evaluate(t0, x0)
    out = []
    for delta in deltas:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_samples):
            dt = delta * rng.uniform(-1.0, 1.0)
            v = rng.standard_normal(x0.size)
            nv = np.linalg.norm(v)
            if nv > 0:
                v = v / nv * delta * rng.uniform(0.0, 1.0) ** (1.0 / max(x0.size, 1))
            pts, rho = F.evaluate(t0 + dt, x0 + v)
            for p in pts:
                excess = hull_distance(pts0, p) + rho - rho0
                worst = max(worst, excess)
        out.append(max(0.0, worst))
    return out


def max_difference_quotient(f, t, points) -> float:
    """Largest pairwise difference quotient of x -> f(t, x) on the sample.

    Used as a discontinuity detector for selections: genuine jumps show
    up as quotients that blow up as sample pairs tighten.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    vals = [np.asarray(f(t, p), dtype=float) for p in pts]
    worst = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            gap = np.linalg.norm(pts[i] - pts[j])
            if gap > 1e-14:
                worst = max(worst, float(np.linalg.norm(vals[i] - vals[j]) / gap))
    return worst


# -- config presets ---------------------------------------------------


def interval_map(lo: float, hi: float, dim: int):
    if hi < lo:
        raise InputError("interval preset needs lo <= hi")
    reaction = PointwiseReaction(
        [lambda t, y, v=lo: np.full(np.shape(y), v),
         lambda t, y, v=hi: np.full(np.shape(y), v)],
        growth_c=max(abs(lo), abs(hi)),
    )
    if dim == 1:
        return SetValuedMap(1, [lambda t, x, v=lo: np.array([v]),
                                lambda t, x, v=hi: np.array([v])],
                            growth_c=reaction.growth_c)
    return nemytskii_lift(reaction, dim)


def logistic_interval_map(dim: int):
    """Pointwise interval [0, y(1 - y)]."""
    reaction = PointwiseReaction(
        [lambda t, y: np.zeros(np.shape(y)),
         lambda t, y: np.asarray(y) * (1.0 - np.asarray(y))],
        growth_c=2.0,
    )
    if dim == 1:
        return SetValuedMap(1, [lambda t, x: np.zeros(1),
                                lambda t, x: x * (1.0 - x)], growth_c=2.0)
    return nemytskii_lift(reaction, dim)


def regularized_sign_map(dim: int, eps: float = 0.1):
    """Set-valued regularization of the sign jump with band eps.

    The value is {sign(y)} away from the jump and widens to [-1, 1] at
    y = 0, so nearby single-point values stay inside the central value.
    """
    if eps <= 0:
        raise InputError("regularization band must be positive")
    lo_gen = lambda t, y: np.clip((np.asarray(y) - eps) / eps, -1.0, 1.0)
    hi_gen = lambda t, y: np.clip((np.asarray(y) + eps) / eps, -1.0, 1.0)
    reaction = PointwiseReaction([lo_gen, hi_gen], growth_c=1.0)
    if dim == 1:
        return SetValuedMap(1, [lambda t, x: np.atleast_1d(lo_gen(t, x[0])),
                                lambda t, x: np.atleast_1d(hi_gen(t, x[0]))],
                            growth_c=1.0)
    return nemytskii_lift(reaction, dim)


def linear_map(matrix, offset=None, dim=None):
    B = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = B.shape[0]
    if B.shape[0] != B.shape[1]:
        raise InputError("linear preset needs a square matrix")
    if dim is not None and dim != d:
        raise InputError(f"linear preset dimension {d} does not match {dim}")
    c = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)
    if c.shape != (d,):
        raise InputError("linear preset offset has wrong length")
    growth = float(np.linalg.norm(B, 2) + np.linalg.norm(c))
    return SetValuedMap(d, [lambda t, x: B @ x + c], growth_c=growth)


_PRESET_KEYS = {
    "interval": {"preset", "lo", "hi"},
    "logistic_interval": {"preset"},
    "regularized_sign": {"preset", "eps"},
    "linear": {"preset", "matrix", "offset"},
}

_PRESET_REQUIRED = {
    "interval": {"lo", "hi"},
    "logistic_interval": set(),
    "regularized_sign": set(),
    "linear": {"matrix"},
}


def map_from_config(cfg: dict, dim: int) -> SetValuedMap:
    if not isinstance(cfg, dict) or "preset" not in cfg:
        raise InputError("map section must be a mapping with a 'preset'")
    preset = cfg["preset"]
    if preset not in _PRESET_KEYS:
        raise InputError(f"unknown map preset {preset!r}")
    extra = set(cfg) - _PRESET_KEYS[preset]
    if extra:
        raise InputError(f"unknown map keys: {sorted(extra)}")
    missing = _PRESET_REQUIRED[preset] - set(cfg)
    if missing:
        raise InputError(f"missing map keys: {sorted(missing)}")
    if preset == "interval":
        return interval_map(cfg["lo"], cfg["hi"], dim)
    if preset == "logistic_interval":
        return logistic_interval_map(dim)
    if preset == "regularized_sign":
        return regularized_sign_map(dim, cfg.get("eps", 0.1))
    return linear_map(cfg["matrix"], cfg.get("offset"), dim=dim)

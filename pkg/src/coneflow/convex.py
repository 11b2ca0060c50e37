"""Closed convex constraint sets, metric projections, and tangent cones.

Four set kinds are supported: coordinate boxes (infinite bounds allowed),
intersections of halfspaces, Euclidean balls, and finite products.  Every
set exposes the metric projection, whose output is characterized by the
variational inequality <k - r(y), y - r(y)> <= 0 for all k in the set.

Tangent cones are represented by their active halfspace constraints
{v : C v <= 0}; an empty constraint list means the full space.
"""

from __future__ import annotations

import numpy as np
import scipy.optimize

from .errors import InputError, NumericalError

_ACTIVITY_DEFAULT = 1e-9


def min_norm_point(P, tol=1e-13):
    """Minimum-norm point of the convex hull of the rows of P.

    Wolfe's combinatorial algorithm: grow a corral of hull points, solve
    the affine least-norm problem on it, and line-search back into the
    simplex when a coefficient goes negative.  Finite termination, exact
    linear algebra on each corral.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    m = P.shape[0]
    if m == 1:
        return P[0].copy()
    norms2 = np.einsum("ij,ij->i", P, P)
    scale = 1.0 + norms2.max()
    S = [int(np.argmin(norms2))]
    lam = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(16 * m + 100):
        dots = P @ x
        jstar = int(np.argmin(dots))
        if dots[jstar] >= x @ x - tol * scale or jstar in S:
            break
        S.append(jstar)
        lam = np.append(lam, 0.0)
        while True:
            B = P[S]
            s = len(S)
            KKT = np.zeros((s + 1, s + 1))
            KKT[:s, :s] = B @ B.T
            KKT[:s, s] = 1.0
            KKT[s, :s] = 1.0
            rhs = np.zeros(s + 1)
            rhs[s] = 1.0
            alpha = np.linalg.lstsq(KKT, rhs, rcond=None)[0][:s]
            if np.all(alpha >= -1e-12):
                lam = np.clip(alpha, 0.0, None)
                lam = lam / lam.sum()
                x = lam @ B
                break
            neg = alpha < -1e-15
            theta = np.min(lam[neg] / (lam[neg] - alpha[neg]))
            theta = min(max(theta, 0.0), 1.0)
            lam = (1.0 - theta) * lam + theta * alpha
            keep = lam > 1e-13
            if not np.any(keep):
                keep[int(np.argmax(lam))] = True
            S = [S[i] for i in range(s) if keep[i]]
            lam = np.clip(lam[keep], 0.0, None)
            lam = lam / lam.sum()
            x = lam @ P[S]
    return x


def hull_project(points, z):
    """Metric projection of z onto the convex hull of the given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float)
    return z + min_norm_point(points - z)


def hull_distance(points, z) -> float:
    return float(np.linalg.norm(hull_project(points, z) - z))


def project_polyhedron(y, A, b, start, max_iter=None, tol=1e-12):
    """Nearest point of {x : A x <= b} to y, from a feasible start.

    Primal active-set iteration with direct equality solves; multipliers
    are checked on exit (Kuhn-Tucker verification) and the iteration cap
    is 50 per constraint row.
    """
    y = np.asarray(y, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    if m == 0:
        return y.copy()
    if max_iter is None:
        max_iter = 50 * m + 20
    x = np.asarray(start, dtype=float).copy()
    W: list[int] = []
    scale = 1.0 + np.linalg.norm(y)
    done = False
    for _ in range(max_iter):
        if W:
            Aw = A[W]
            mu = np.linalg.lstsq(Aw @ Aw.T, Aw @ y - b[W], rcond=None)[0]
            xstar = y - Aw.T @ mu
        else:
            mu = np.zeros(0)
            xstar = y.copy()
        step = xstar - x
        if np.linalg.norm(step) <= tol * scale:
            if mu.size == 0 or np.all(mu >= -1e-10):
                x = xstar
                done = True
                break
            W.pop(int(np.argmin(mu)))
            continue
        alpha = 1.0
        blocker = -1
        ax = A @ x
        ad = A @ step
        for i in range(m):
            if ad[i] > 1e-14 * scale and i not in W:
                ratio = (b[i] - ax[i]) / ad[i]
                if ratio < alpha - 1e-15:
                    alpha = max(ratio, 0.0)
                    blocker = i
        x = x + alpha * step
        if blocker >= 0 and alpha < 1.0:
            W.append(blocker)
    if not done:
        raise NumericalError("active-set projection did not converge", iterate=x)
    worst = float((A @ x - b).max())
    if worst > 1e-9 * scale:
        raise NumericalError(f"projected point infeasible by {worst:.3e}", iterate=x)
    return x


class TangentCone:
    """Polyhedral cone {v : rows @ v <= 0} of admissible directions."""

    def __init__(self, base_point, rows):
        self.base_point = np.asarray(base_point, dtype=float)
        rows = np.asarray(rows, dtype=float)
        if rows.size == 0:
            rows = np.zeros((0, self.base_point.size))
        self.rows = np.atleast_2d(rows)

    @property
    def full_space(self) -> bool:
        return self.rows.shape[0] == 0

    def contains(self, v, tol=1e-9) -> bool:
        if self.full_space:
            return True
        v = np.asarray(v, dtype=float)
        return bool(np.all(self.rows @ v <= tol * (1.0 + np.linalg.norm(v))))

    def project(self, v):
        v = np.asarray(v, dtype=float)
        if self.full_space:
            return v.copy()
        zero = np.zeros(self.rows.shape[0])
        return project_polyhedron(v, self.rows, zero, np.zeros_like(v))

    def distance(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.project(v)))


class ConvexSet:
    """Base class: nonempty closed convex subset of R^dim."""

    kind = "abstract"

    def __init__(self, dim):
        self.dim = int(dim)

    @property
    def is_full_space(self) -> bool:
        return False

    def project(self, y):
        raise NotImplementedError

    def distance(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.linalg.norm(y - self.project(y)))

    def contains(self, x, tol=1e-10) -> bool:
        return self.distance(x) <= tol

    def interior_point(self):
        raise NotImplementedError

    def variational_residual(self, y, k) -> float:
        """Inner product <k - r(y), y - r(y)>; nonpositive up to rounding.

        The witness k must belong to the set.
        """
        y = np.asarray(y, dtype=float)
        k = np.asarray(k, dtype=float)
        if self.distance(k) > 1e-7 * (1.0 + np.linalg.norm(k)):
            raise InputError("variational witness lies outside the set")
        r = self.project(y)
        return float((k - r) @ (y - r))

    def tangent_cone(self, x, activity_tol=None) -> TangentCone:
        raise NotImplementedError

    def _activity_tol(self, x, activity_tol):
        if activity_tol is None:
            return _ACTIVITY_DEFAULT * (1.0 + float(np.linalg.norm(x)))
        return activity_tol

    def _require_member(self, x):
        if self.distance(x) > 1e-7 * (1.0 + float(np.linalg.norm(x))):
            raise InputError("tangent cone base point lies outside the set")


class Box(ConvexSet):
    """Coordinate box; entries of lo/hi may be -inf or +inf."""

    kind = "box"

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise InputError("box has empty coordinate range")
        super().__init__(lo.size)
        self.lo = lo
        self.hi = hi

    @property
    def is_full_space(self) -> bool:
        return bool(np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi)))

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lo, self.hi)

    def distance(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.linalg.norm(y - np.clip(y, self.lo, self.hi)))

    def interior_point(self):
        p = np.zeros(self.dim)
        for i in range(self.dim):
            lo, hi = self.lo[i], self.hi[i]
            if np.isfinite(lo) and np.isfinite(hi):
                p[i] = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                p[i] = lo + 1.0
            elif np.isfinite(hi):
                p[i] = hi - 1.0
        return p

    def tangent_cone(self, x, activity_tol=None) -> TangentCone:
        x = np.asarray(x, dtype=float)
        self._require_member(x)
        atol = self._activity_tol(x, activity_tol)
        rows = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            if np.isfinite(self.lo[i]) and x[i] <= self.lo[i] + atol:
                e[i] = -1.0
                rows.append(e.copy())
                e[i] = 0.0
            if np.isfinite(self.hi[i]) and x[i] >= self.hi[i] - atol:
                e[i] = 1.0
                rows.append(e)
        return TangentCone(x, np.array(rows) if rows else np.zeros((0, self.dim)))


class Halfspaces(ConvexSet):
    """Intersection {x : a_i . x <= b_i}; rows are normalized on input."""

    kind = "halfspaces"

    def __init__(self, a, b):
        A = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float)
        if A.shape[0] != b.shape[0]:
            raise InputError("need one offset per halfspace row")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise InputError("halfspace normal must be nonzero")
        super().__init__(A.shape[1])
        self.a = A / norms[:, None]
        self.b = b / norms
        self._feasible = self._find_feasible()

    def _find_feasible(self):
        if np.all(self.b > 0.0):
            # origin is strictly inside every halfspace
            return np.zeros(self.dim)
        # Chebyshev center: max r s.t. a_i . x + r <= b_i
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.a, np.ones((self.a.shape[0], 1))])
        res = scipy.optimize.linprog(
            c, A_ub=A_ub, b_ub=self.b, bounds=[(None, None)] * (self.dim + 1),
            method="highs",
        )
        if not res.success or res.x[-1] < -1e-9:
            raise InputError("halfspace intersection is empty")
        return res.x[: self.dim]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        if np.all(self.a @ y <= self.b + 1e-13 * (1.0 + np.linalg.norm(y))):
            return y.copy()
        return project_polyhedron(y, self.a, self.b, self._feasible)

    def interior_point(self):
        return self._feasible.copy()

    def tangent_cone(self, x, activity_tol=None) -> TangentCone:
        x = np.asarray(x, dtype=float)
        self._require_member(x)
        atol = self._activity_tol(x, activity_tol)
        active = self.a @ x >= self.b - atol
        return TangentCone(x, self.a[active])


class Ball(ConvexSet):
    """Closed Euclidean ball."""

    kind = "ball"

    def __init__(self, center, radius):
        center = np.asarray(center, dtype=float)
        if radius <= 0:
            raise InputError("ball radius must be positive")
        super().__init__(center.size)
        self.center = center
        self.radius = float(radius)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        d = y - self.center
        n = np.linalg.norm(d)
        if n <= self.radius:
            return y.copy()
        return self.center + (self.radius / n) * d

    def distance(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return max(0.0, float(np.linalg.norm(y - self.center)) - self.radius)

    def interior_point(self):
        return self.center.copy()

    def tangent_cone(self, x, activity_tol=None) -> TangentCone:
        x = np.asarray(x, dtype=float)
        self._require_member(x)
        atol = self._activity_tol(x, activity_tol)
        d = x - self.center
        n = np.linalg.norm(d)
        if n >= self.radius - atol and n > 0:
            return TangentCone(x, (d / n)[None, :])
        return TangentCone(x, np.zeros((0, self.dim)))


class Product(ConvexSet):
    """Cartesian product of factor sets; everything factors coordinatewise."""

    kind = "product"

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise InputError("product needs at least one factor")
        super().__init__(sum(f.dim for f in factors))
        self.factors = factors
        self.offsets = np.cumsum([0] + [f.dim for f in factors])

    @property
    def is_full_space(self) -> bool:
        return all(f.is_full_space for f in self.factors)

    def _split(self, y):
        return [y[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.factors))]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        return np.concatenate(
            [f.project(part) for f, part in zip(self.factors, self._split(y))]
        )

    def distance(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(
            np.sqrt(
                sum(
                    f.distance(part) ** 2
                    for f, part in zip(self.factors, self._split(y))
                )
            )
        )

    def interior_point(self):
        return np.concatenate([f.interior_point() for f in self.factors])

    def tangent_cone(self, x, activity_tol=None) -> TangentCone:
        x = np.asarray(x, dtype=float)
        rows = []
        for i, (f, part) in enumerate(zip(self.factors, self._split(x))):
            cone = f.tangent_cone(part, activity_tol)
            for row in cone.rows:
                padded = np.zeros(self.dim)
                padded[self.offsets[i]:self.offsets[i + 1]] = row
                rows.append(padded)
        return TangentCone(x, np.array(rows) if rows else np.zeros((0, self.dim)))


def full_space(dim: int) -> Box:
    return Box(np.full(dim, -np.inf), np.full(dim, np.inf))


def project_rows(K: ConvexSet, pts) -> np.ndarray:
    """Metric projection applied to each row of a point matrix."""
    pts = np.asarray(pts, dtype=float)
    if isinstance(K, Box):
        return np.clip(pts, K.lo, K.hi)
    return np.array([K.project(p) for p in pts])


def tangent_feasible_point(cone, points, radius=0.0, seed_point=None, tol=1e-9):
    """Point of (conv(points) + radius * ball) inside the cone, or None.

    Among feasible points, the one nearest the seed (default: the hull
    barycenter) is returned, so a feasible seed is returned unchanged.
    Infeasibility is reported as None.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    radius = float(radius)
    seed_in_value = seed_point is None
    seed = np.mean(points, axis=0) if seed_in_value else np.asarray(seed_point, float)
    scale = 1.0 + float(np.abs(points).max()) + abs(radius)

    def in_value(z, slack=tol * scale):
        return hull_distance(points, z) <= radius + slack

    def project_value(z):
        w = hull_project(points, z)
        gap = np.linalg.norm(z - w)
        if gap <= radius:
            return z.copy()
        return w if radius == 0.0 else w + (radius / gap) * (z - w)

    if cone.full_space:
        return seed.copy() if seed_in_value or in_value(seed) else project_value(seed)
    if cone.contains(seed, tol=1e-12 * scale) and (seed_in_value or in_value(seed)):
        return seed.copy()
    q = cone.project(seed)
    if points.shape[0] == 1 and radius == 0.0:
        gap = float(np.linalg.norm(q - points[0]))
        return q if gap <= tol * scale else None
    if in_value(q):
        return q
    # alternate projections (Dykstra) between the value set and the cone
    x = seed.copy()
    p = np.zeros_like(x)
    r = np.zeros_like(x)
    y = x
    for _ in range(5000):
        y_new = project_value(x + p)
        p = x + p - y_new
        x_new = cone.project(y_new + r)
        r = y_new + r - x_new
        moved = max(np.linalg.norm(x_new - x), np.linalg.norm(y_new - y))
        x, y = x_new, y_new
        if moved <= 1e-13 * scale:
            break
    if np.linalg.norm(x - y) > tol * scale:
        return None
    if not cone.contains(x, tol=tol * scale):
        x = cone.project(x)
    if not in_value(x, slack=10 * tol * scale):
        return None
    return x


_SET_KEYS = {
    "box": {"kind", "lo", "hi"},
    "halfspaces": {"kind", "a", "b"},
    "ball": {"kind", "center", "radius"},
    "product": {"kind", "factors"},
}


def set_from_config(cfg: dict) -> ConvexSet:
    """Build a constraint set from a scenario config section.

    Box bounds use null for an unbounded side.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise InputError("set section must be a mapping with a 'kind'")
    kind = cfg["kind"]
    if kind not in _SET_KEYS:
        raise InputError(f"unknown set kind {kind!r}")
    extra = set(cfg) - _SET_KEYS[kind]
    if extra:
        raise InputError(f"unknown set keys: {sorted(extra)}")
    missing = _SET_KEYS[kind] - set(cfg)
    if missing:
        raise InputError(f"missing set keys: {sorted(missing)}")
    if kind == "box":
        lo = [-np.inf if v is None else v for v in cfg["lo"]]
        hi = [np.inf if v is None else v for v in cfg["hi"]]
        return Box(lo, hi)
    if kind == "halfspaces":
        return Halfspaces(cfg["a"], cfg["b"])
    if kind == "ball":
        return Ball(cfg["center"], cfg["radius"])
    return Product([set_from_config(f) for f in cfg["factors"]])

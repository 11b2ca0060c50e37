"""Topological degree and constrained fixed-point index in dimension <= 3.

The Brouwer degree of a map over a bounded open region is computed from
boundary data only: sign changes in dimension one, winding of the field
along the boundary curve in dimension two (angle increments kept below
pi/2 by adaptive bisection), and summed oriented solid angles over a
boundary triangulation in dimension three.  Every computation is
repeated under mesh refinement until the integer is unchanged twice in a
row; the certificate records the refinement trail and the smallest
boundary residual seen.

The constrained index of a self-map f of K over a relatively open
region U is the degree of x - f(r(x)) over r^{-1}(U) clipped to a
bounding box, where r retracts onto K.  For regions strictly interior
to K the preimage coincides with U itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .convex import Box, ConvexSet
from .errors import (BoundaryZeroError, InconclusiveError, InputError,
                     NumericalError)
from .setmaps import tangent_selection

_MAX_LEVEL = 6
_ZERO_HIT = 1e-13


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


@dataclass
class DegreeCertificate:
    """Computed integer with its refinement trail.

    Stability under mesh refinement is a strong consistency check, not a
    proof; a zero hiding between mesh nodes closer to the boundary than
    min_boundary_residual allows could in principle escape it.
    """

    value: int
    method: str
    params: dict
    stability: list
    min_boundary_residual: float

    def to_dict(self) -> dict:
        return {
            "value": int(self.value),
            "method": self.method,
            "params": _jsonable(self.params),
            "stability": _jsonable(self.stability),
            "min_boundary_residual": float(self.min_boundary_residual),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# -- regions ----------------------------------------------------------


class OpenRegion:
    """Bounded region U = (open shape) intersected with the constraint set.

    The shape is a finite box or a ball; the boundary of U relative to
    the constraint set is the part of the shape boundary inside the set.
    """

    def __init__(self, K: ConvexSet, shape: str, center=None, radius=None,
                 lo=None, hi=None):
        self.K = K
        self.shape = shape
        if shape == "ball":
            self.center = np.asarray(center, dtype=float)
            self.radius = float(radius)
            if self.radius <= 0 or self.center.size != K.dim:
                raise InputError("bad ball region parameters")
        elif shape == "box":
            self.lo = np.asarray(lo, dtype=float)
            self.hi = np.asarray(hi, dtype=float)
            if (self.lo.size != K.dim or np.any(~np.isfinite(self.lo))
                    or np.any(~np.isfinite(self.hi)) or np.any(self.lo >= self.hi)):
                raise InputError("bad box region parameters")
        else:
            raise InputError(f"unknown region shape {shape!r}")

    @property
    def dim(self) -> int:
        return self.K.dim

    def diam(self) -> float:
        if self.shape == "ball":
            return 2.0 * self.radius
        return float(np.linalg.norm(self.hi - self.lo))

    def shape_bounds(self):
        if self.shape == "ball":
            return self.center - self.radius, self.center + self.radius
        return self.lo.copy(), self.hi.copy()

    def signed_gap(self, x) -> float:
        """Negative strictly inside the shape, positive outside."""
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return float(np.linalg.norm(x - self.center) - self.radius)
        return float(np.max(np.maximum(self.lo - x, x - self.hi)))

    def signed_gap_batch(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.shape == "ball":
            return np.linalg.norm(pts - self.center, axis=1) - self.radius
        return np.max(np.maximum(self.lo - pts, pts - self.hi), axis=1)

    def contains(self, x, tol=1e-9) -> bool:
        return self.signed_gap(x) < -tol and self.K.contains(x, tol)

    def closure_contains(self, x, tol=1e-9) -> bool:
        return self.signed_gap(x) <= tol and self.K.contains(x, tol)

    def interior_reference(self) -> np.ndarray:
        c = self.center if self.shape == "ball" else 0.5 * (self.lo + self.hi)
        return self.K.project(c)

    # boundary parametrizations in the ambient space

    def _shape_boundary_points(self, level: int) -> np.ndarray:
        n = self.dim
        if n == 1:
            lo, hi = self.shape_bounds()
            return np.array([[lo[0]], [hi[0]]])
        if n == 2:
            loops = self._shape_loops(level)
            return np.vstack([np.array([fn(s) for s in params])
                              for fn, params in loops])
        verts, _ = self._shape_surface(level)
        return verts

    def boundary_mesh(self, level: int = 0) -> np.ndarray:
        """Mesh of the relative boundary: shape boundary inside the set."""
        pts = self._shape_boundary_points(level)
        scale = 1.0 + float(np.abs(pts).max())
        keep = [p for p in pts if self.K.distance(p) <= 1e-9 * scale]
        if not keep:
            return np.zeros((0, self.dim))
        return np.array(keep)

    def _shape_loops(self, level: int):
        """Closed parametrized boundary loops (dimension two only)."""
        if self.shape == "ball":
            n = 32 * (2 ** level)
            c, r = self.center, self.radius

            def fn(s, c=c, r=r):
                th = 2.0 * math.pi * (s % 1.0)
                return np.array([c[0] + r * math.cos(th), c[1] + r * math.sin(th)])

            return [(fn, [k / n for k in range(n)])]
        lo, hi = self.lo, self.hi
        w, h = hi[0] - lo[0], hi[1] - lo[1]
        per = 2.0 * (w + h)

        def fn(s, lo=lo, w=w, h=h, per=per):
            d = (s % 1.0) * per
            if d <= w:
                return np.array([lo[0] + d, lo[1]])
            d -= w
            if d <= h:
                return np.array([lo[0] + w, lo[1] + d])
            d -= h
            if d <= w:
                return np.array([lo[0] + w - d, lo[1] + h])
            d -= w
            return np.array([lo[0], lo[1] + h - min(d, h)])

        n = 8 * (2 ** level)
        params = sorted({(i * w + j * (w + h)) / per % 1.0
                         for j in (0, 1) for i in (0, 1)}
                        | {k / (4 * n) for k in range(4 * n)})
        return [(fn, params)]

    def _shape_surface(self, level: int):
        """Outward-oriented boundary triangulation (dimension three only)."""
        if self.shape == "ball":
            verts, tris = _octasphere(level + 2)
            return self.center + self.radius * verts, tris
        return _box_surface(self.lo, self.hi, level + 2)


def region_from_config(K: ConvexSet, cfg: dict) -> OpenRegion:
    if not isinstance(cfg, dict) or "shape" not in cfg:
        raise InputError("region section must be a mapping with a 'shape'")
    kind = cfg["shape"]
    allowed = {"ball": {"shape", "center", "radius"}, "box": {"shape", "lo", "hi"}}
    if kind not in allowed:
        raise InputError(f"unknown region shape {kind!r}")
    extra = set(cfg) - allowed[kind]
    if extra:
        raise InputError(f"unknown region keys: {sorted(extra)}")
    if kind == "ball":
        return OpenRegion(K, "ball", center=cfg["center"], radius=cfg["radius"])
    return OpenRegion(K, "box", lo=cfg["lo"], hi=cfg["hi"])


def _octasphere(level: int):
    verts = [np.array(v, dtype=float) for v in
             [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    tris = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
            (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    for _ in range(level):
        new_tris = []
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new_tris
    return np.array(verts), np.array(tris, dtype=int)


def _box_surface(lo, hi, level: int):
    n = 2 ** level
    verts = []
    tris = []
    index = {}

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(np.asarray(p, dtype=float))
        return index[key]

    center = 0.5 * (np.asarray(lo) + np.asarray(hi))
    for axis in range(3):
        for side, val in ((0, lo[axis]), (1, hi[axis])):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            us = np.linspace(lo[u_ax], hi[u_ax], n + 1)
            vs = np.linspace(lo[v_ax], hi[v_ax], n + 1)
            for i in range(n):
                for j in range(n):
                    quad = []
                    for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.empty(3)
                        p[axis] = val
                        p[u_ax] = us[i + du]
                        p[v_ax] = vs[j + dv]
                        quad.append(vid(p))
                    for tri in ((quad[0], quad[1], quad[2]),
                                (quad[0], quad[2], quad[3])):
                        a, b, c = (verts[t] for t in tri)
                        nrm = np.cross(b - a, c - a)
                        out = a - center
                        if nrm @ out < 0:
                            tri = (tri[0], tri[2], tri[1])
                        tris.append(tri)
    return np.array(verts), np.array(tris, dtype=int)


# -- boundary walkers -------------------------------------------------


class _FieldCache:
    """Memoized field evaluation with the exact-zero displacement rule.

    A node where the field vanishes to rounding is retried once,
    displaced a third of the local mesh width toward the given interior
    reference; a persistent zero is a hard error.
    """

    def __init__(self, phi, tol, phi_batch=None):
        self.phi = phi
        self.phi_batch = phi_batch
        self.tol = tol
        self.cache = {}
        self.min_norm = np.inf

    def prime(self, pts):
        """Bulk-evaluate uncached points through the batch field.

        Near-zero rows are left uncached so that at() applies the
        displacement retry to them individually.
        """
        if self.phi_batch is None:
            return
        fresh = []
        for p in pts:
            p = np.asarray(p, dtype=float)
            if p.tobytes() not in self.cache:
                fresh.append(p)
        if not fresh:
            return
        P = np.stack(fresh)
        V = np.asarray(self.phi_batch(P), dtype=float)
        scales = 1.0 + np.linalg.norm(P, axis=1)
        norms = np.linalg.norm(V, axis=1)
        for p, v, nv, sc in zip(P, V, norms, scales):
            if nv <= _ZERO_HIT * sc:
                continue
            if nv <= self.tol * sc:
                raise BoundaryZeroError(
                    f"field norm {float(nv):.3e} at boundary point {p.tolist()}")
            self.min_norm = min(self.min_norm, float(nv))
            self.cache[p.tobytes()] = v

    def at(self, p, mesh_h, ref):
        key = p.tobytes()
        if key in self.cache:
            return self.cache[key]
        v = np.asarray(self.phi(p), dtype=float)
        scale = 1.0 + float(np.linalg.norm(p))
        if np.linalg.norm(v) <= _ZERO_HIT * scale:
            d = ref - p
            nd = np.linalg.norm(d)
            if nd > 0:
                p2 = p + (mesh_h / 3.0) * d / nd
                v = np.asarray(self.phi(p2), dtype=float)
        nv = float(np.linalg.norm(v))
        if nv <= self.tol * scale:
            raise BoundaryZeroError(
                f"field norm {nv:.3e} at boundary point {p.tolist()}")
        self.min_norm = min(self.min_norm, nv)
        self.cache[key] = v
        return v


def _winding(phi_cache: _FieldCache, point_fn, params, ref, max_points=20000):
    """Winding number of the field along one closed parametrized loop."""
    ss = sorted(s % 1.0 for s in params)
    if len(ss) < 4:
        raise InputError("loop needs at least four points")

    def angle_at(s, mesh_h):
        v = phi_cache.at(point_fn(s), mesh_h, ref)
        return math.atan2(v[1], v[0])

    for _ in range(60):
        pts = [point_fn(s) for s in ss]
        phi_cache.prime(pts)
        gaps = [np.linalg.norm(pts[(i + 1) % len(ss)] - pts[i])
                for i in range(len(ss))]
        angles = [angle_at(s, max(g, 1e-12)) for s, g in zip(ss, gaps)]
        total = 0.0
        refine_at = []
        for i in range(len(ss)):
            a0 = angles[i]
            a1 = angles[(i + 1) % len(ss)]
            d = (a1 - a0 + math.pi) % (2.0 * math.pi) - math.pi
            if abs(d) >= 0.5 * math.pi:
                s0 = ss[i]
                s1 = ss[(i + 1) % len(ss)] if i + 1 < len(ss) else ss[0] + 1.0
                refine_at.append(((s0 + s1) / 2.0) % 1.0)
            total += d
        if not refine_at:
            w = total / (2.0 * math.pi)
            if abs(w - round(w)) > 0.05:
                raise NumericalError(f"winding sum {w:.4f} is not near an integer")
            return int(round(w))
        ss = sorted(set(ss) | set(refine_at))
        if len(ss) > max_points:
            raise InconclusiveError("angle refinement exceeded the point budget")
    raise InconclusiveError("angle refinement did not terminate")


def _interval_degree(phi_cache: _FieldCache, intervals):
    """Signed endpoint count for a scalar field over interval components."""
    deg = 0
    for a, b in intervals:
        width = b - a
        va = phi_cache.at(np.array([a]), width * 1e-3, np.array([a + width / 2]))
        vb = phi_cache.at(np.array([b]), width * 1e-3, np.array([a + width / 2]))
        deg += (int(np.sign(vb[0])) - int(np.sign(va[0]))) // 2
    return deg


def _solid_angle(a, b, c) -> float:
    na, nb, nc = (np.linalg.norm(v) for v in (a, b, c))
    num = float(np.linalg.det(np.stack([a, b, c])))
    den = (na * nb * nc + (a @ b) * nc + (a @ c) * nb + (b @ c) * na)
    return 2.0 * math.atan2(num, den)


def _surface_degree(phi_cache: _FieldCache, verts, tris, ref):
    """Solid-angle sum over a consistent closed triangulation.

    Returns None when any single triangle subtends at least pi/2, in
    which case the caller must refine globally (local splits would break
    edge consistency).
    """
    edge = np.max(np.linalg.norm(verts[tris[:, 0]] - verts[tris[:, 1]], axis=1))
    phi_cache.prime(verts)
    images = [phi_cache.at(v, edge, ref) for v in verts]
    total = 0.0
    for a, b, c in tris:
        om = _solid_angle(images[a], images[b], images[c])
        if abs(om) >= 0.5 * math.pi:
            return None
        total += om
    w = total / (4.0 * math.pi)
    if abs(w - round(w)) > 0.05:
        raise NumericalError(f"solid angle sum {w:.4f} is not near an integer")
    return int(round(w))


def _stabilized(eval_level, method, params, max_level=_MAX_LEVEL):
    values = []
    stab = []
    minres = np.inf
    for level in range(max_level + 1):
        v, res = eval_level(level)
        values.append(v)
        stab.append({"param": f"level_{level}", "value": v})
        minres = res
        if (len(values) >= 3 and v is not None
                and values[-1] == values[-2] == values[-3]):
            return DegreeCertificate(int(v), method, params, stab, float(minres))
    raise InconclusiveError("integer did not stabilize under refinement",
                            table=stab)


# -- Brouwer degree ---------------------------------------------------


def brouwer_degree(map_fn, U: OpenRegion, tol=1e-9,
                   map_batch=None) -> DegreeCertificate:
    """Degree of map_fn over a region of the full ambient space."""
    if not U.K.is_full_space:
        raise InputError("degree over constrained regions goes through the index")
    n = U.dim
    if n not in (1, 2, 3):
        raise InputError(f"degree supported in dimension <= 3, got {n}")
    cache = _FieldCache(map_fn, tol, phi_batch=map_batch)
    ref = U.interior_reference()
    if n == 1:
        lo, hi = U.shape_bounds()

        def eval_level(level):
            deg = _interval_degree(cache, [(lo[0], hi[0])])
            return deg, cache.min_norm

    elif n == 2:

        def eval_level(level):
            deg = 0
            for fn, params in U._shape_loops(level):
                deg += _winding(cache, fn, params, ref)
            return deg, cache.min_norm

    else:

        def eval_level(level):
            verts, tris = U._shape_surface(level)
            return _surface_degree(cache, verts, tris, ref), cache.min_norm

    params = {"tol": tol, "shape": U.shape, "dim": n}
    return _stabilized(eval_level, "boundary_walk", params)


# -- index of constrained self-maps -----------------------------------


def _retraction(K: ConvexSet, variant: str):
    if variant == "metric":
        return K.project
    if variant == "reflected":
        # proj(2 proj(x) - x): identity on K, displacement <= twice the distance
        return lambda x: K.project(2.0 * K.project(x) - np.asarray(x, float))
    raise InputError(f"unknown retraction variant {variant!r}")


def _project_batch(K: ConvexSet, pts: np.ndarray) -> np.ndarray:
    if isinstance(K, Box):
        return np.clip(pts, K.lo, K.hi)
    return np.array([K.project(p) for p in pts])


def _retraction_batch(K: ConvexSet, variant: str):
    if variant == "metric":
        return lambda P: _project_batch(K, np.asarray(P, dtype=float))
    if variant == "reflected":

        def rb(P):
            P = np.asarray(P, dtype=float)
            Q = _project_batch(K, P)
            return _project_batch(K, 2.0 * Q - P)

        return rb
    raise InputError(f"unknown retraction variant {variant!r}")


def _region_interior_to_set(U: OpenRegion) -> bool:
    """Test that the closure of U avoids the set boundary."""
    if U.K.is_full_space:
        return True
    if isinstance(U.K, Box):
        # exact: the shape bounds must sit strictly inside the box
        lo, hi = U.shape_bounds()
        pad = 1e-9 * (1.0 + float(np.max(np.abs(np.concatenate([lo, hi])))))
        return bool(np.all(lo > U.K.lo + pad) and np.all(hi < U.K.hi - pad))
    samples = [U.interior_reference()]
    lo, hi = U.shape_bounds()
    grid = [np.linspace(lo[i], hi[i], 5) for i in range(U.dim)]
    mesh = np.meshgrid(*grid, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    for p in pts:
        if U.closure_contains(p, tol=1e-9):
            samples.append(p)
    samples.extend(U.boundary_mesh(level=1))
    for p in samples:
        p = np.asarray(p, float)
        if not U.K.contains(p, tol=1e-9):
            return False
        if not U.K.tangent_cone(p, activity_tol=1e-7).full_space:
            return False
    return True


def _box_preimage(U: OpenRegion, B_lo, B_hi):
    """Exact clip preimage of a box shape under a box constraint set."""
    K = U.K
    lo = np.empty(U.dim)
    hi = np.empty(U.dim)
    for i in range(U.dim):
        a, b = U.lo[i], U.hi[i]
        klo, khi = K.lo[i], K.hi[i]
        if b <= klo or a >= khi:
            return None  # empty region
        lo[i] = a if a >= klo else -np.inf
        hi[i] = b if b <= khi else np.inf
    lo = np.maximum(lo, B_lo)
    hi = np.minimum(hi, B_hi)
    return lo, hi


def _preimage_intervals(U: OpenRegion, r, B_lo, B_hi, level):
    """Scalar case: connected components of {x in B : r(x) in U}."""
    n = 2048 * (2 ** level) + 1
    xs = np.linspace(B_lo[0], B_hi[0], n)

    def psi(x):
        return U.signed_gap(r(np.array([x])))

    vals = np.array([psi(x) for x in xs])
    inside = vals < 0.0
    if not inside.any():
        return []
    edges = []
    for i in range(n - 1):
        if inside[i] != inside[i + 1]:
            a, b = xs[i], xs[i + 1]
            fa = vals[i]
            for _ in range(80):
                m = 0.5 * (a + b)
                fm = psi(m)
                if (fa < 0) == (fm < 0):
                    a, fa = m, fm
                else:
                    b = m
            edges.append(0.5 * (a + b))
    starts = [xs[0]] if inside[0] else []
    bounds = starts + edges + ([xs[-1]] if inside[-1] else [])
    return [(bounds[i], bounds[i + 1]) for i in range(0, len(bounds) - 1, 2)]


def _preimage_loops(U: OpenRegion, r, B_lo, B_hi, level, r_batch=None):
    """Planar case: oriented boundary polylines of {x in B : r(x) in U}."""
    n = 96 * (2 ** level) + 1
    pad = 2.0 * (B_hi - B_lo).max() / (n - 1)
    g_lo, g_hi = B_lo - pad, B_hi + pad
    xs = np.linspace(g_lo[0], g_hi[0], n)
    ys = np.linspace(g_lo[1], g_hi[1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    # contour field must use the same retraction as the walked map
    proj = r_batch(pts) if r_batch is not None else np.array([r(p) for p in pts])
    gap_u = U.signed_gap_batch(proj)
    gap_b = np.max(np.maximum(B_lo - pts, pts - B_hi), axis=1)
    psi = np.maximum(gap_u, gap_b).reshape(n, n)
    from matplotlib.path import Path

    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    loops = []
    for contour in measure.find_contours(psi, 0.0):
        if len(contour) < 4 or not np.allclose(contour[0], contour[-1]):
            continue
        poly = np.stack([g_lo[0] + contour[:-1, 0] * dx,
                         g_lo[1] + contour[:-1, 1] * dy], axis=1)
        # material side: probe just left of the rightmost vertex
        k = int(np.argmax(poly[:, 0]))
        path = Path(poly)
        probe = None
        for delta in (0.5 * dx, 0.25 * dx, 0.1 * dx):
            cand = poly[k] - np.array([delta, 0.0])
            if path.contains_point(cand):
                probe = cand
                break
        if probe is None:
            probe = poly.mean(axis=0)
        inside_is_material = U.signed_gap(r(probe)) < 0 and np.max(
            np.maximum(B_lo - probe, probe - B_hi)) < 0
        area = 0.5 * float(np.sum(
            poly[:, 0] * np.roll(poly[:, 1], -1)
            - np.roll(poly[:, 0], -1) * poly[:, 1]))
        ccw = area > 0
        if ccw != inside_is_material:
            poly = poly[::-1]
        seg = np.linalg.norm(np.diff(np.vstack([poly, poly[:1]]), axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        if total <= 0:
            continue
        closed = np.vstack([poly, poly[:1]])

        def fn(s, closed=closed, cum=cum, total=total):
            d = (s % 1.0) * total
            i = int(np.searchsorted(cum, d, side="right")) - 1
            i = min(max(i, 0), len(closed) - 2)
            t = (d - cum[i]) / max(cum[i + 1] - cum[i], 1e-300)
            return closed[i] + t * (closed[i + 1] - closed[i])

        params = (cum[:-1] / total).tolist()
        ref = probe if inside_is_material else poly.mean(axis=0)
        loops.append((fn, params, ref))
    return loops


def fixed_point_index(f, U: OpenRegion, tol=1e-9, margin=2.0,
                      retraction="metric", extra_params=None,
                      f_batch=None) -> DegreeCertificate:
    """Index of the self-map f of the constraint set over the region U.

    f must be defined on the set near the closure of U and map into the
    set.  Boundary fixed points (within tol) are rejected up front.
    f_batch, when given, must evaluate f on the rows of a point matrix
    with the same arithmetic; it only accelerates the boundary walks.
    """
    K = U.K
    n = U.dim
    if n not in (1, 2, 3):
        raise InputError(f"index supported in dimension <= 3, got {n}")
    r = _retraction(K, retraction)
    mesh = U.boundary_mesh(level=1)
    if f_batch is not None:
        images = np.asarray(f_batch(np.asarray(mesh, dtype=float)), dtype=float)
    else:
        images = np.array([f(x) for x in mesh], dtype=float)
    for x, fx in zip(mesh, images):
        res = float(np.linalg.norm(x - fx))
        if res <= tol * (1.0 + np.linalg.norm(x)):
            raise BoundaryZeroError(
                f"fixed point on the relative boundary at {x.tolist()} "
                f"(residual {res:.3e})")

    memo = {}

    def phi(x):
        key = x.tobytes()
        if key not in memo:
            xx = np.asarray(x, dtype=float)
            memo[key] = xx - np.asarray(f(r(xx)), dtype=float)
        return memo[key]

    rb = _retraction_batch(K, retraction)
    phi_batch = None
    if f_batch is not None:

        def phi_batch(P):
            P = np.asarray(P, dtype=float)
            return P - np.asarray(f_batch(rb(P)), dtype=float)

    params = {"tol": tol, "margin": margin, "retraction": retraction,
              "dim": n, "shape": U.shape}
    if extra_params:
        params.update(extra_params)

    interior = _region_interior_to_set(U)
    params["region_interior_to_set"] = interior
    cache = _FieldCache(phi, tol, phi_batch=phi_batch)
    ref = U.interior_reference()

    if interior:
        # r is the identity near cl U, so the preimage region coincides
        # with U; the direct walk is the certified route
        params["preimage"] = "region"
        if n == 1:
            lo, hi = U.shape_bounds()

            def eval_level(level):
                return _interval_degree(cache, [(lo[0], hi[0])]), cache.min_norm

        elif n == 2:

            def eval_level(level):
                deg = 0
                for fn, ps in U._shape_loops(level):
                    deg += _winding(cache, fn, ps, ref)
                return deg, cache.min_norm

        else:

            def eval_level(level):
                verts, tris = U._shape_surface(level)
                return _surface_degree(cache, verts, tris, ref), cache.min_norm

        cert = _stabilized(eval_level, "index_boundary_walk", params)
        if n in (1, 2):
            # independence cross-check: the same integer must come out of
            # the retraction-preimage scan over V = r^-1(U) cut to a box
            s_lo, s_hi = U.shape_bounds()
            pad = margin * U.diam()
            B_lo, B_hi = s_lo - pad, s_hi + pad
            if n == 1:

                def eval_scan(level):
                    ivs = _preimage_intervals(U, r, B_lo, B_hi, level)
                    if not ivs:
                        raise InputError(
                            "retraction preimage of the region is empty")
                    return _interval_degree(cache, ivs), cache.min_norm

            else:

                def eval_scan(level):
                    deg = 0
                    for fn, ps, lref in _preimage_loops(U, r, B_lo, B_hi,
                                                        level, r_batch=rb):
                        deg += _winding(cache, fn, ps, lref)
                    return deg, cache.min_norm

            check = _stabilized(eval_scan, "index_preimage_scan",
                                dict(params))
            if check.value != cert.value:
                raise InconclusiveError(
                    "direct boundary walk and preimage scan disagree "
                    f"({cert.value} vs {check.value})",
                    table=cert.stability + check.stability)
            cert.params["preimage_scan_value"] = check.value
            cert.min_boundary_residual = min(cert.min_boundary_residual,
                                             check.min_boundary_residual)
        return cert

    # boundary-touching region: walk the retraction preimage inside a box
    s_lo, s_hi = U.shape_bounds()
    pad = margin * U.diam()
    B_lo, B_hi = s_lo - pad, s_hi + pad
    params["bounding_box"] = [B_lo.tolist(), B_hi.tolist()]

    if isinstance(K, Box) and U.shape == "box" and retraction == "metric":
        pre = _box_preimage(U, B_lo, B_hi)
        if pre is None:
            raise InputError("region is empty")
        v_lo, v_hi = pre
        params["preimage"] = "box"
        V = OpenRegion(type(K)(np.full(n, -np.inf), np.full(n, np.inf)),
                       "box", lo=v_lo, hi=v_hi)
        vref = 0.5 * (v_lo + v_hi)
        if n == 1:

            def eval_level(level):
                return _interval_degree(cache, [(v_lo[0], v_hi[0])]), cache.min_norm

        elif n == 2:

            def eval_level(level):
                deg = 0
                for fn, ps in V._shape_loops(level):
                    deg += _winding(cache, fn, ps, vref)
                return deg, cache.min_norm

        else:

            def eval_level(level):
                verts, tris = V._shape_surface(level)
                return _surface_degree(cache, verts, tris, vref), cache.min_norm

        return _stabilized(eval_level, "index_boundary_walk", params)

    params["preimage"] = "scan"
    if n == 1:

        def eval_level(level):
            intervals = _preimage_intervals(U, r, B_lo, B_hi, level)
            if not intervals:
                raise InputError("retraction preimage of the region is empty")
            return _interval_degree(cache, intervals), cache.min_norm

        return _stabilized(eval_level, "index_boundary_walk", params)
    if n == 2:

        def eval_level(level):
            deg = 0
            for fn, ps, lref in _preimage_loops(U, r, B_lo, B_hi, level,
                                                r_batch=rb):
                deg += _winding(cache, fn, ps, lref)
            return deg, cache.min_norm

        return _stabilized(eval_level, "index_boundary_walk", params)
    raise InconclusiveError(
        "three-dimensional boundary-touching regions need a surface preimage "
        "construction that is not implemented")


# -- constrained degree of the right-hand side ------------------------


def rhs_index_at(op, G, K: ConvexSet, U: OpenRegion, alpha, h, seed=0,
                 margin=2.0, retraction="metric", tol=1e-9,
                 t_freeze=0.0) -> DegreeCertificate:
    """Index of the projected resolvent update of A + G at one (alpha, h).

    The update map is x -> r(J_h(x + h g(x))) with g a tangent selection
    of G; its fixed points are exactly the constrained zeros of
    A x + G(x).
    """
    if U.dim not in (1, 2, 3):
        raise InputError(f"index supported in dimension <= 3, got {U.dim}")
    if h <= 0:
        raise InputError(f"step must be positive, got {h}")
    if h * op.growth_omega >= 1.0:
        raise InputError(f"h*omega = {h * op.growth_omega:.3g} >= 1")
    g = tangent_selection(G, K, alpha=alpha, seed=seed, verify=False)
    for x in U.boundary_mesh(level=1):
        gap = G.value_distance(t_freeze, x, -(op.matrix @ x))
        if gap <= tol * (1.0 + np.linalg.norm(x)):
            raise BoundaryZeroError(
                f"right-hand side meets -A x on the boundary at {x.tolist()}")
    solver = op.resolvent_solver(h)

    def f_h(x):
        x = np.asarray(x, dtype=float)
        return K.project(solver(x + h * g(t_freeze, x)))

    def f_h_batch(P):
        P = np.asarray(P, dtype=float)
        W = np.asarray(g.batch(t_freeze, P), dtype=float)
        return _project_batch(K, solver((P + h * W).T).T)

    extra = {"alpha": alpha, "h": h, "seed": seed}
    return fixed_point_index(f_h, U, tol=tol, margin=margin,
                             retraction=retraction, extra_params=extra,
                             f_batch=f_h_batch)


def degree_rhs(op, G, K: ConvexSet, U: OpenRegion, sweep, seed=0, margin=2.0,
               retraction="metric", tol=1e-9) -> DegreeCertificate:
    """Constrained degree of A + G over U via an (alpha, h) sweep.

    The sweep must list at least three (alpha, h) pairs in decreasing
    order; the value is accepted once the final three entries agree.
    """
    sweep = [(float(a), float(h)) for a, h in sweep]
    if len(sweep) < 3:
        raise InconclusiveError(
            "sweep ended before three consecutive agreements "
            f"(needs >= 3 entries, got {len(sweep)})",
            table=[{"param": f"alpha={a},h={h}", "value": None} for a, h in sweep])
    stab = []
    minres = np.inf
    certs = []
    for a, h in sweep:
        cert = rhs_index_at(op, G, K, U, a, h, seed=seed, margin=margin,
                            retraction=retraction, tol=tol)
        certs.append(cert)
        stab.append({"param": f"alpha={a},h={h}", "value": cert.value})
        minres = min(minres, cert.min_boundary_residual)
    tail = [e["value"] for e in stab[-3:]]
    if len(set(tail)) != 1:
        raise InconclusiveError("sweep tail did not stabilize", table=stab)
    params = {"sweep": [[a, h] for a, h in sweep], "seed": seed,
              "margin": margin, "retraction": retraction, "tol": tol}
    return DegreeCertificate(int(tail[-1]), "resolvent_sweep", params, stab,
                             float(minres))


@dataclass
class HomotopyCheckReport:
    z_values: list
    degrees: list
    residual_floors: list
    all_equal: bool
    min_residual: float
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable({
            "z_values": self.z_values, "degrees": self.degrees,
            "residual_floors": self.residual_floors,
            "all_equal": self.all_equal, "min_residual": self.min_residual,
            "params": self.params,
        })


def degree_homotopy_check(op, family, K: ConvexSet, U: OpenRegion, z_samples,
                          alpha, h, seed=0, tol=1e-9,
                          margin=2.0) -> HomotopyCheckReport:
    """Degree constancy along a parametrized family of right-hand sides.

    family(z) must return the set-valued map at parameter z.  A boundary
    zero at any sampled z aborts the check naming that z.
    """
    degrees = []
    floors = []
    zs = [float(z) for z in z_samples]
    for z in zs:
        Gz = family(z)
        floor = np.inf
        for x in U.boundary_mesh(level=1):
            floor = min(floor, Gz.value_distance(0.0, x, -(op.matrix @ x)))
        if floor <= tol:
            raise BoundaryZeroError(
                f"family touches -A x on the boundary at z={z:.6g}")
        floors.append(float(floor))
        cert = rhs_index_at(op, Gz, K, U, alpha, h, seed=seed, margin=margin,
                            tol=tol)
        degrees.append(cert.value)
    return HomotopyCheckReport(
        zs, degrees, floors, len(set(degrees)) == 1,
        float(min(floors)) if floors else np.inf,
        {"alpha": alpha, "h": h, "seed": seed})


def locate_zero(op, G, K: ConvexSet, U: OpenRegion, alpha=1e-3, seed=0,
                grid=9):
    """Search for a constrained zero of A x + G(x) inside U.

    Returns (point, residual) where the residual is the distance from
    -A x to the map value; the caller decides what residual is small
    enough to certify existence.
    """
    import scipy.optimize

    g = tangent_selection(G, K, alpha=alpha, seed=seed, verify=False)

    def residual_field(x):
        return op.matrix @ x + g(0.0, K.project(x))

    lo, hi = U.shape_bounds()
    axes = [np.linspace(lo[i], hi[i], grid) for i in range(U.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    best = None
    best_val = np.inf
    for p in pts:
        if not U.contains(p, tol=1e-9):
            continue
        v = float(np.linalg.norm(residual_field(p)))
        if v < best_val:
            best, best_val = p, v
    if best is None:
        best = U.interior_reference()
    sol = scipy.optimize.least_squares(residual_field, best, xtol=1e-15,
                                       ftol=1e-15, gtol=1e-15)
    x_star = K.project(sol.x)
    gap = G.value_distance(0.0, x_star, -(op.matrix @ x_star))
    return x_star, float(gap)

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from coneflow.convex import (Ball, Box, Halfspaces, Product, full_space,
                             hull_distance, hull_project, min_norm_point,
                             project_polyhedron, project_rows,
                             set_from_config, tangent_feasible_point)
from coneflow.errors import InputError


def min_norm_oracle(P):
    """Min-norm point of a hull by KKT solves over every vertex subset.

    The optimum lies in some face, so minimizing |w @ Q| subject to
    sum(w) = 1 over each subset Q and keeping the feasible candidates
    (w >= 0) is exhaustive for small vertex counts.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    best = None
    for r in range(1, len(P) + 1):
        for idx in itertools.combinations(range(len(P)), r):
            Q = P[list(idx)]
            G = Q @ Q.T
            kkt = np.zeros((r + 1, r + 1))
            kkt[:r, :r] = G
            kkt[:r, r] = 1.0
            kkt[r, :r] = 1.0
            rhs = np.zeros(r + 1)
            rhs[r] = 1.0
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            w = sol[:r]
            if np.any(w < -1e-9) or abs(w.sum() - 1.0) > 1e-9:
                continue
            z = w @ Q
            if best is None or np.linalg.norm(z) < np.linalg.norm(best):
                best = z
    return best


def sample_sets():
    return {
        "box": Box([0.0, -1.0], [1.0, 2.0]),
        "orthant": Box([0.0, 0.0], [np.inf, np.inf]),
        "ball": Ball([0.5, -0.5], 1.5),
        "halfspaces": Halfspaces([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                                 [1.0, 0.0, 0.0]),
        "product": Product([Box([0.0], [1.0]), Ball([0.0], 2.0)]),
    }


class TestHullOperations:
    def test_min_norm_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            P = rng.standard_normal((rng.integers(1, 6), 2)) + rng.normal()
            got = min_norm_point(P)
            want = min_norm_oracle(P)
            assert abs(np.linalg.norm(got) - np.linalg.norm(want)) <= 1e-9

    def test_hull_project_is_nearest(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            P = rng.standard_normal((4, 3))
            z = rng.standard_normal(3)
            w = hull_project(P, z)
            d = hull_distance(P, z)
            assert abs(np.linalg.norm(z - w) - d) <= 1e-12
            want = min_norm_oracle(P - z)
            assert abs(d - np.linalg.norm(want)) <= 1e-9

    def test_interior_point_projects_to_itself(self):
        P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        z = np.array([0.2, 0.2])
        assert_allclose(hull_project(P, z), z, atol=1e-12)
        assert hull_distance(P, z) <= 1e-12


class TestProjection:
    def test_box_clip(self):
        K = Box([0.0, 0.0], [1.0, 1.0])
        assert_allclose(K.project([1.5, -0.3]), [1.0, 0.0])

    def test_ball_radial(self):
        K = Ball([0.0, 0.0], 1.0)
        assert_allclose(K.project([3.0, 4.0]), [0.6, 0.8], rtol=1e-12)

    def test_halfspace_bisector(self):
        K = Halfspaces([[1.0, 1.0]], [1.0])
        assert_allclose(K.project([1.0, 1.0]), [0.5, 0.5], atol=1e-10)

    def test_idempotent_and_distance_consistent(self):
        rng = np.random.default_rng(2)
        for K in sample_sets().values():
            for _ in range(40):
                y = 3.0 * rng.standard_normal(K.dim)
                p = K.project(y)
                assert_allclose(K.project(p), p, atol=1e-9)
                assert abs(np.linalg.norm(y - p) - K.distance(y)) <= 1e-10
                assert K.contains(p, tol=1e-9)

    def test_nonexpansive(self):
        rng = np.random.default_rng(3)
        for K in sample_sets().values():
            for _ in range(40):
                y1 = 3.0 * rng.standard_normal(K.dim)
                y2 = 3.0 * rng.standard_normal(K.dim)
                lhs = np.linalg.norm(K.project(y1) - K.project(y2))
                assert lhs <= np.linalg.norm(y1 - y2) + 1e-10

    def test_polyhedron_matches_qp_oracle(self):
        import scipy.optimize

        rng = np.random.default_rng(4)
        A = np.array([[1.0, 1.0], [-1.0, 0.5], [0.0, -1.0]])
        b = np.array([1.0, 0.5, 0.2])
        K = Halfspaces(A, b)
        for _ in range(10):
            y = 2.0 * rng.standard_normal(2)
            got = K.project(y)
            res = scipy.optimize.minimize(
                lambda z: 0.5 * np.sum((z - y) ** 2), K.interior_point(),
                jac=lambda z: z - y,
                constraints=[{"type": "ineq",
                              "fun": lambda z, a=a, bb=bb: bb - a @ z}
                             for a, bb in zip(A / np.linalg.norm(A, axis=1)[:, None],
                                              b / np.linalg.norm(A, axis=1))],
                method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
            assert np.linalg.norm(got - res.x) <= 1e-6

    def test_project_rows_matches_pointwise(self):
        rng = np.random.default_rng(5)
        for K in sample_sets().values():
            Y = 3.0 * rng.standard_normal((8, K.dim))
            R = project_rows(K, Y)
            for y, r in zip(Y, R):
                assert_allclose(r, K.project(y), atol=1e-12)


class TestMembership:
    def test_box_examples(self):
        K = Box([0.0, 0.0], [1.0, 1.0])
        assert K.contains([0.5, 0.5], tol=0.0)
        assert not K.contains([1.0000001, 0.0], tol=1e-9)

    def test_halfspace_triangle(self):
        K = Halfspaces([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [1.0, 0.0, 0.0])
        assert K.contains([0.3, 0.3])
        assert not K.contains([0.8, 0.8])

    def test_distance_zero_iff_member(self):
        K = Ball([0.0, 0.0], 1.0)
        assert K.distance([0.3, 0.4]) == 0.0
        assert K.distance([3.0, 4.0]) == pytest.approx(4.0, abs=1e-12)


class TestVariationalInequality:
    def test_member_gives_zero(self):
        K = Box([0.0], [1.0])
        assert K.variational_residual([0.5], [0.25]) == 0.0

    def test_scalar_box_value(self):
        K = Box([0.0], [1.0])
        assert_allclose(K.variational_residual([2.0], [0.0]), -1.0, atol=1e-12)

    def test_ball_random_members(self):
        K = Ball([0.0, 0.0], 1.0)
        rng = np.random.default_rng(6)
        for _ in range(100):
            k = rng.standard_normal(2)
            k = k / max(1.0, np.linalg.norm(k))
            assert K.variational_residual([2.0, 0.0], k) <= 1e-12

    def test_all_kinds_random_pairs(self):
        rng = np.random.default_rng(7)
        for K in sample_sets().values():
            worst = -np.inf
            for _ in range(200):
                y = 3.0 * rng.standard_normal(K.dim)
                k = K.project(2.0 * rng.standard_normal(K.dim))
                worst = max(worst, K.variational_residual(y, k))
            assert worst <= 1e-10

    def test_outside_reference_rejected(self):
        K = Box([0.0], [1.0])
        with pytest.raises(InputError):
            K.variational_residual([0.5], [2.0])


def limit_slope(K, x, v, h=1e-7):
    return K.distance(np.asarray(x, float) + h * np.asarray(v, float)) / h


class TestTangentCones:
    def test_orthant_face(self):
        K = Box([0.0, 0.0], [np.inf, np.inf])
        cone = K.tangent_cone([0.0, 5.0])
        assert not cone.full_space
        assert cone.contains([1.0, -1.0])
        assert cone.contains([0.0, 1.0])
        assert not cone.contains([-1.0, 0.0])

    def test_interior_full_space(self):
        for K in sample_sets().values():
            x = K.interior_point()
            assert K.tangent_cone(x).full_space

    def test_ball_boundary_halfspace(self):
        K = Ball([0.0, 0.0], 1.0)
        cone = K.tangent_cone([1.0, 0.0])
        assert cone.contains([-1.0, 0.5])
        assert cone.contains([0.0, 1.0])
        assert not cone.contains([1.0, 0.0])

    def test_membership_matches_limit_definition(self):
        rng = np.random.default_rng(8)
        for name, K in sample_sets().items():
            for _ in range(25):
                y = 2.0 * rng.standard_normal(K.dim)
                x = K.project(y)
                cone = K.tangent_cone(x)
                v = rng.standard_normal(K.dim)
                v /= np.linalg.norm(v)
                slope = limit_slope(K, x, v)
                if cone.contains(v, tol=1e-12):
                    assert slope <= 1e-3, f"{name}: tangent direction drifts"
                elif slope <= 1e-9:
                    # strictly interior-pointing direction must be in the cone
                    assert cone.contains(v, tol=1e-9)

    def test_cone_projection_properties(self):
        K = Box([0.0, 0.0], [np.inf, np.inf])
        cone = K.tangent_cone([0.0, 0.0])
        v = np.array([-1.0, 2.0])
        p = cone.project(v)
        assert cone.contains(p, tol=1e-12)
        assert_allclose(p, [0.0, 2.0], atol=1e-12)
        assert cone.distance(v) == pytest.approx(1.0, abs=1e-12)
        # cone property: nonnegative scaling preserved
        assert cone.contains(3.0 * p, tol=1e-12)
        assert cone.contains(np.zeros(2), tol=1e-12)

    def test_far_base_point_rejected(self):
        K = Box([0.0], [1.0])
        with pytest.raises(InputError):
            K.tangent_cone([5.0])

    def test_product_factors_componentwise(self):
        K = Product([Box([0.0], [1.0]), Box([0.0], [np.inf])])
        cone = K.tangent_cone([1.0, 0.0])
        assert cone.contains([-1.0, 1.0])
        assert not cone.contains([1.0, 1.0])
        assert not cone.contains([-1.0, -1.0])
        y = np.array([1.7, -0.4])
        split = np.concatenate([Box([0.0], [1.0]).project(y[:1]),
                                Box([0.0], [np.inf]).project(y[1:])])
        assert_allclose(K.project(y), split, atol=0)


class TestTangentFeasiblePoint:
    def test_full_space_returns_seed(self):
        K = full_space(2)
        cone = K.tangent_cone([0.0, 0.0])
        p = np.array([[0.3, -0.7]])
        assert_allclose(tangent_feasible_point(cone, p), [0.3, -0.7])

    def test_empty_intersection_is_none(self):
        K = Box([0.0], [np.inf])
        cone = K.tangent_cone([0.0])
        assert tangent_feasible_point(cone, [[-1.0]]) is None

    def test_segment_clip(self):
        K = Box([0.0], [np.inf])
        cone = K.tangent_cone([0.0])
        got = tangent_feasible_point(cone, [[-1.0], [2.0]])
        assert got is not None
        assert -1e-9 <= got[0] <= 2.0
        assert cone.distance(got) <= 1e-9

    def test_ball_value_against_scan(self):
        # value set = segment + radius, cone = left halfplane
        K = Ball([0.0, 0.0], 1.0)
        cone = K.tangent_cone([1.0, 0.0])
        got = tangent_feasible_point(cone, [[0.5, 0.0]], radius=0.75)
        assert got is not None
        assert got[0] <= 1e-9
        assert hull_distance(np.array([[0.5, 0.0]]), got) <= 0.75 + 1e-9


class TestConfig:
    def test_box_with_nulls(self):
        K = set_from_config({"kind": "box", "lo": [0.0, None], "hi": [None, 1.0]})
        assert isinstance(K, Box)
        assert np.isposinf(K.hi[0]) and np.isneginf(K.lo[1])

    def test_all_kinds_round(self):
        for cfg in (
            {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
            {"kind": "halfspaces", "a": [[1.0, 0.0]], "b": [1.0]},
            {"kind": "product", "factors": [
                {"kind": "box", "lo": [0.0], "hi": [1.0]},
                {"kind": "ball", "center": [0.0], "radius": 1.0}]},
        ):
            K = set_from_config(cfg)
            assert K.dim == 2

    def test_unknown_kind_and_keys_rejected(self):
        with pytest.raises(InputError):
            set_from_config({"kind": "simplex"})
        with pytest.raises(InputError):
            set_from_config({"kind": "ball", "center": [0.0], "radius": 1.0,
                             "margin": 2.0})
        with pytest.raises(InputError):
            set_from_config({"kind": "box", "lo": [0.0]})

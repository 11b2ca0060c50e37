import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from coneflow.convex import Box, full_space
from coneflow.degree import (DegreeCertificate, OpenRegion, brouwer_degree,
                             degree_homotopy_check, degree_rhs,
                             fixed_point_index, locate_zero, region_from_config,
                             rhs_index_at)
from coneflow.errors import (BoundaryZeroError, InconclusiveError, InputError)
from coneflow.operators import LinearOperator
from coneflow.setmaps import SetValuedMap, interval_map, linear_map

R1 = full_space(1)
R2 = full_space(2)
R3 = full_space(3)
HALF_LINE = Box([0.0], [np.inf])


def ball(K, center, radius):
    return OpenRegion(K, "ball", center=center, radius=radius)


def box(K, lo, hi):
    return OpenRegion(K, "box", lo=lo, hi=hi)


class TestBrouwer:
    def test_identity_on_disk(self):
        cert = brouwer_degree(lambda x: x, ball(R2, [0.0, 0.0], 1.0))
        assert cert.value == 1
        assert cert.min_boundary_residual > 0.5

    def test_constant_map_is_zero(self):
        assert brouwer_degree(lambda x: np.array([0.7]),
                              box(R1, [-1.0], [1.0])).value == 0
        assert brouwer_degree(lambda x: np.array([0.3, -0.2]),
                              ball(R2, [0.0, 0.0], 1.0)).value == 0

    def test_squaring_map_winds_twice(self):
        f = lambda x: np.array([x[0] ** 2 - x[1] ** 2, 2.0 * x[0] * x[1]])
        cert = brouwer_degree(f, ball(R2, [0.0, 0.0], 1.0))
        assert cert.value == 2

    def test_scalar_sign_half_difference(self):
        assert brouwer_degree(lambda x: x - 0.3, box(R1, [-1.0], [1.0])).value == 1
        assert brouwer_degree(lambda x: 0.3 - x, box(R1, [-1.0], [1.0])).value == -1
        assert brouwer_degree(lambda x: x - 5.0, box(R1, [-1.0], [1.0])).value == 0

    def test_identity_on_3d_ball(self):
        cert = brouwer_degree(lambda x: x, ball(R3, [0.0, 0.0, 0.0], 1.0))
        assert cert.value == 1

    def test_affine_maps_match_jacobian_sign(self):
        cases = [
            (R2, ball(R2, [0.2, -0.1], 1.0), np.array([0.2, -0.1]),
             np.array([[2.0, 1.0], [0.5, -1.0]])),
            (R2, box(R2, [-1.0, -1.0], [1.0, 1.0]), np.array([0.3, 0.3]),
             np.array([[1.0, 3.0], [0.0, 0.5]])),
            (R3, ball(R3, [0.0, 0.0, 0.0], 1.0), np.zeros(3),
             np.array([[1.0, 0.2, 0.0], [0.0, -1.0, 0.4], [0.3, 0.0, 2.0]])),
        ]
        for K, U, a, M in cases:
            f = lambda x, M=M, a=a: M @ (x - a)
            want = int(np.sign(np.linalg.det(M)))
            assert brouwer_degree(f, U).value == want

    def test_zero_outside_region_gives_zero(self):
        f = lambda x: x - np.array([5.0, 5.0])
        assert brouwer_degree(f, ball(R2, [0.0, 0.0], 1.0)).value == 0

    def test_zero_on_boundary_rejected(self):
        # residual 5e-10 at the theta=0 mesh node: above the exact-hit
        # displacement floor, below tol*scale, so the walk must abort
        f = lambda x: x - np.array([1.0 + 5e-10, 0.0])
        with pytest.raises(BoundaryZeroError):
            brouwer_degree(f, ball(R2, [0.0, 0.0], 1.0))

    def test_exact_node_hit_retried_deterministically(self):
        # boundary node at 0 evaluates to exactly zero; the displaced
        # retry settles the sign and repeat runs agree
        f = lambda x: x
        a = brouwer_degree(f, box(R1, [0.0], [2.0]))
        b = brouwer_degree(f, box(R1, [0.0], [2.0]))
        assert a.value == b.value == 0

    def test_box_boundary_walk_2d(self):
        f = lambda x: x - np.array([0.25, -0.25])
        assert brouwer_degree(f, box(R2, [-1.0, -1.0], [1.0, 1.0])).value == 1

    def test_dimension_cap(self):
        with pytest.raises(InputError):
            brouwer_degree(lambda x: x, ball(full_space(4), [0.0] * 4, 1.0))

    def test_certificate_serializes(self):
        cert = brouwer_degree(lambda x: x, ball(R2, [0.0, 0.0], 1.0))
        blob = json.loads(cert.to_json())
        assert blob["value"] == 1
        assert blob["min_boundary_residual"] > 0
        assert isinstance(blob["stability"], list)
        assert len(blob["stability"]) >= 3


class TestFixedPointIndex:
    def test_constant_target_inside(self):
        f = lambda x: np.array([0.2, 0.1])
        cert = fixed_point_index(f, ball(R2, [0.0, 0.0], 1.0))
        assert cert.value == 1

    def test_translation_has_no_fixed_point(self):
        f = lambda x: x + np.array([10.0, 0.0])
        cert = fixed_point_index(f, ball(R2, [0.0, 0.0], 1.0))
        assert cert.value == 0

    def test_clamped_scalar_matches_brute_force(self):
        K = HALF_LINE
        U = box(K, [-0.5], [1.5])
        f = lambda x: np.maximum(0.0, 0.5 - x)
        cert = fixed_point_index(f, U)

        def psi(x):
            r = max(0.0, x)
            val = x - max(0.0, 0.5 - r)
            return val

        # brute force: signed zero count of x - f(r(x)) over the
        # enlarged box, restricted to preimages of U; the grid is
        # offset so no sample lands on a root exactly
        lo, hi = -0.5 - 2.0 * 2.0, 1.5 + 2.0 * 2.0
        xs = np.linspace(lo, hi, 200001) + 2.3e-7
        vals = np.array([psi(x) for x in xs])
        brute = 0
        for i in range(len(xs) - 1):
            if vals[i] == 0.0 or vals[i] * vals[i + 1] >= 0.0:
                continue
            root = xs[i] - vals[i] * (xs[i + 1] - xs[i]) / (vals[i + 1] - vals[i])
            if -0.5 < max(0.0, root) < 1.5:
                brute += 1 if vals[i + 1] > vals[i] else -1
        assert brute == 1
        assert cert.value == brute

    def test_interior_region_cross_checks_preimage_scan(self):
        f1 = lambda x: 0.5 - 0.5 * x
        c1 = fixed_point_index(f1, box(R1, [-1.0], [1.0]))
        assert c1.value == 1
        assert c1.params["preimage_scan_value"] == c1.value

        f2 = lambda x: np.array([0.1, -0.2]) + 0.3 * x
        c2 = fixed_point_index(f2, ball(R2, [0.0, 0.0], 1.0))
        assert c2.value == 1
        assert c2.params["preimage_scan_value"] == c2.value

    def test_retraction_variants_agree(self):
        K = Box([0.0, 0.0], [np.inf, np.inf])
        U = box(K, [-0.5, -0.5], [1.0, 1.0])
        f = lambda x: 0.5 - 0.5 * x
        a = fixed_point_index(f, U, retraction="metric")
        b = fixed_point_index(f, U, retraction="reflected")
        assert a.value == b.value == 1

    def test_fixed_point_on_boundary_rejected(self):
        f = lambda x: np.array([1.0, 0.0])
        with pytest.raises(BoundaryZeroError):
            fixed_point_index(f, ball(R2, [0.0, 0.0], 1.0))

    def test_dimension_cap(self):
        with pytest.raises(InputError):
            fixed_point_index(lambda x: 0.5 * x,
                              ball(full_space(4), [0.0] * 4, 1.0))


def phi_cubic(x):
    # zeros at 0, 1, 2 with slopes +2, -1, +2
    return x * (1.0 - x) * (2.0 - x)


def cubic_rhs():
    return SetValuedMap(1, [lambda t, x: np.atleast_1d(phi_cubic(x[0]))])


SWEEP = [(1e-2, 1e-1), (1e-3, 3e-2), (1e-4, 1e-2)]


class TestDegreeRhs:
    def test_stable_linear_field(self):
        op = LinearOperator(-np.eye(2), growth_omega=-1.0)
        G = linear_map(np.zeros((2, 2)))
        cert = degree_rhs(op, G, R2, ball(R2, [0.0, 0.0], 1.0), SWEEP)
        assert cert.value == 1
        assert cert.method == "resolvent_sweep"
        assert cert.min_boundary_residual > 0

    def test_saddle_field(self):
        op = LinearOperator(np.diag([1.0, -1.0]), growth_omega=1.0)
        G = linear_map(np.zeros((2, 2)))
        cert = degree_rhs(op, G, R2, ball(R2, [0.0, 0.0], 1.0), SWEEP)
        assert cert.value == -1

    def test_orthant_boundary_zero_region(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = linear_map([[-1.0]], offset=[1.0])
        cert = degree_rhs(op, G, HALF_LINE, box(HALF_LINE, [0.5], [1.5]),
                          SWEEP)
        assert cert.value == 1

    def test_independence_across_h_seed_retraction(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = linear_map([[-1.0]], offset=[1.0])
        U = box(HALF_LINE, [0.5], [1.5])
        for seed in (0, 1):
            for retraction in ("metric", "reflected"):
                cert = degree_rhs(op, G, HALF_LINE, U, SWEEP, seed=seed,
                                  retraction=retraction)
                assert cert.value == 1

    def test_additivity_over_separated_zeros(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = cubic_rhs()
        big = degree_rhs(op, G, R1, box(R1, [-0.5], [2.5]), SWEEP)
        left = degree_rhs(op, G, R1, box(R1, [-0.5], [1.5]), SWEEP)
        right = degree_rhs(op, G, R1, box(R1, [1.5], [2.5]), SWEEP)
        assert big.value == left.value + right.value
        assert (big.value, left.value, right.value) == (-1, 0, -1)

    def test_nonzero_degree_locates_a_zero(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = linear_map([[-1.0]], offset=[1.0])
        U = box(HALF_LINE, [0.5], [1.5])
        cert = degree_rhs(op, G, HALF_LINE, U, SWEEP)
        assert cert.value != 0
        x_star, residual = locate_zero(op, G, HALF_LINE, U)
        assert residual <= 1e-6
        assert_allclose(x_star, [1.0], atol=1e-6)

    def test_perturbation_below_residual_floor(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = linear_map([[-1.0]], offset=[1.0])
        U = box(HALF_LINE, [0.5], [1.5])
        cert = degree_rhs(op, G, HALF_LINE, U, SWEEP)
        eps = 0.45 * cert.min_boundary_residual
        shifted = linear_map([[-1.0]], offset=[1.0 + eps])
        cert2 = degree_rhs(op, shifted, HALF_LINE, U, SWEEP)
        assert cert2.value == cert.value

    def test_boundary_zero_precheck(self):
        op = LinearOperator(np.zeros((1, 1)))
        G = linear_map([[-1.0]], offset=[1.0])
        with pytest.raises(BoundaryZeroError):
            rhs_index_at(op, G, R1, box(R1, [1.0], [2.0]), 1e-3, 1e-2)

    def test_short_sweep_is_inconclusive(self):
        op = LinearOperator(-np.eye(1), growth_omega=-1.0)
        G = linear_map(np.zeros((1, 1)))
        with pytest.raises(InconclusiveError):
            degree_rhs(op, G, R1, box(R1, [-1.0], [1.0]), SWEEP[:2])

    def test_step_validation(self):
        op = LinearOperator(np.diag([1.0, -1.0]), growth_omega=1.0)
        G = linear_map(np.zeros((2, 2)))
        U = ball(R2, [0.0, 0.0], 1.0)
        with pytest.raises(InputError):
            rhs_index_at(op, G, R2, U, 1e-3, -0.1)
        with pytest.raises(InputError):
            rhs_index_at(op, G, R2, U, 1e-3, 1.0)

    def test_certificate_table_round_trip(self):
        op = LinearOperator(-np.eye(1), growth_omega=-1.0)
        G = linear_map(np.zeros((1, 1)))
        cert = degree_rhs(op, G, R1, box(R1, [-1.0], [1.0]), SWEEP)
        blob = json.loads(cert.to_json())
        assert blob == cert.to_dict()
        assert blob["params"]["sweep"] == [[a, h] for a, h in SWEEP]
        assert [e["value"] for e in blob["stability"]] == [1, 1, 1]


class TestHomotopyCheck:
    def test_constant_family(self):
        op = LinearOperator(-np.eye(2), growth_omega=-1.0)
        G = linear_map(np.zeros((2, 2)))
        rep = degree_homotopy_check(op, lambda z: G, R2,
                                    ball(R2, [0.0, 0.0], 1.0),
                                    (0.0, 0.5, 1.0), 1e-3, 1e-2)
        assert rep.all_equal
        assert rep.degrees == [1, 1, 1]
        assert rep.min_residual > 0

    def test_linear_interpolation_to_rotated_field(self):
        op = LinearOperator(-np.eye(2), growth_omega=-1.0)
        rot = np.array([[0.0, -0.3], [0.3, 0.0]])

        def family(z):
            return linear_map(z * rot)

        rep = degree_homotopy_check(op, family, R2,
                                    ball(R2, [0.0, 0.0], 1.0),
                                    (0.0, 0.5, 1.0), 1e-3, 1e-2)
        assert rep.all_equal
        assert set(rep.degrees) == {1}

    def test_zero_crossing_boundary_reports_z(self):
        op = LinearOperator(np.zeros((1, 1)))

        def family(z):
            return linear_map([[-1.0]], offset=[1.0 + z])

        with pytest.raises(BoundaryZeroError) as info:
            degree_homotopy_check(op, family, R1, box(R1, [0.5], [1.5]),
                                  (0.0, 0.5), 1e-3, 1e-2)
        assert "z=0.5" in str(info.value)


class TestRegions:
    def test_membership_predicates(self):
        U = box(HALF_LINE, [-0.5], [1.5])
        assert U.contains([0.0])
        assert U.contains([1.0])
        assert not U.contains([1.5])
        assert U.closure_contains([1.5])
        assert not U.contains([-0.1])
        assert not U.closure_contains([2.0])

    def test_boundary_mesh_respects_the_set(self):
        U = box(HALF_LINE, [-0.5], [1.5])
        mesh = U.boundary_mesh()
        assert_allclose(mesh, [[1.5]])
        V = box(R1, [-0.5], [1.5])
        assert_allclose(np.sort(V.boundary_mesh(), axis=0), [[-0.5], [1.5]])

    def test_mesh_levels_refine(self):
        U = ball(R2, [0.0, 0.0], 1.0)
        m0 = U.boundary_mesh(0)
        m1 = U.boundary_mesh(1)
        assert len(m1) == 2 * len(m0)
        assert np.allclose(np.linalg.norm(m1, axis=1), 1.0)

    def test_config_parsing(self):
        U = region_from_config(R2, {"shape": "ball", "center": [0.0, 0.0],
                                    "radius": 2.0})
        assert U.shape == "ball" and U.diam() == 4.0
        with pytest.raises(InputError):
            region_from_config(R2, {"shape": "annulus"})
        with pytest.raises(InputError):
            region_from_config(R2, {"shape": "ball", "center": [0.0, 0.0],
                                    "radius": 1.0, "tilt": 0.3})
        with pytest.raises(InputError):
            region_from_config(R1, {"shape": "box", "lo": [1.0], "hi": [0.0]})

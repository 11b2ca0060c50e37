"""Constrained differential inclusions: projected stepping, tangent
selections, low-dimensional degree, and return-map verification."""

from .convex import (Ball, Box, ConvexSet, Halfspaces, Product, TangentCone,
                     full_space, hull_distance, hull_project, min_norm_point,
                     project_polyhedron, set_from_config,
                     tangent_feasible_point)
from .degree import (DegreeCertificate, HomotopyCheckReport, OpenRegion,
                     brouwer_degree, degree_homotopy_check, degree_rhs,
                     fixed_point_index, locate_zero, region_from_config,
                     rhs_index_at)
from .errors import (BoundaryZeroError, ConeflowError, DomainError,
                     InconclusiveError, InputError, NumericalError,
                     TangencyViolationError)
from .harness import (BoundaryExclusionReport, BridgeReport, Scenario,
                      VerificationReport, boundary_exclusion_scan,
                      homotopy_bridge_check, verify)
from .integrator import (FunnelSample, HomotopyFlowSpec, Trajectory, funnel,
                         homotopy_flow, poincare, solve, step,
                         viability_drift)
from .operators import (ForcingSignal, LinearOperator, diag_operator,
                        dirichlet_laplacian_1d, operator_from_config)
from .scenarios import (apply_overrides, build_scenario, bundled_config,
                        bundled_names, load_scenario, load_scenario_file,
                        parse_config, serialize_config)
from .setmaps import (GridProductMap, PointwiseReaction, Selection,
                      SetValuedMap, hull_map, husc_probe, interval_map,
                      linear_map, logistic_interval_map, map_from_config,
                      max_difference_quotient, nemytskii_lift,
                      regularized_sign_map, tangent_selection)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

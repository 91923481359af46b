"""Shooting solver for convex rotational lambda-hypersurfaces."""

from .ode_core import (
    DomainError,
    GraphOverR,
    Params,
    PolarState,
    ProfileState,
    lambda_residual,
    mean_curvature,
    principal_curvatures,
    rhs_arclength,
    rhs_graph_over_r,
    rhs_graph_over_x,
    rhs_polar,
)
from .integrator import (
    EventKind,
    IntegratorConfig,
    Trajectory,
    integrate_from_axis,
    integrate_until,
    start_on_axis,
)
from .shooting import (
    assemble_closed_profile,
    find_root,
    scan_roots,
    shoot,
    verify_bounds,
)
from .linearization import (
    endpoint_derivatives,
    finite_difference_check,
    solve_plane_linearization,
    solve_sphere_linearization,
)
from .geometry import certify, export, revolve_mesh

__version__ = "0.1.0"

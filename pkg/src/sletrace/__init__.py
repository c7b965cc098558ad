"""Simulation of SLE traces and the tooling to measure how fast it converges.

The backward Loewner flow is advanced with a Strang-type splitting of its two
exactly solvable sub-flows; forward traces for step, chord, and square-root
interpolated Brownian drivers come from a zipper of per-segment inverse maps.
A convergence lab measures sup-norm and L^p errors across resolutions on a
single Brownian realization and evaluates the theoretical rate envelopes.
"""
from .brownian import (
    BrownianPath,
    DriverKind,
    DriverSegment,
    driver_view,
    path_to_csv,
    refine_all_midpoints,
    refine_midpoint,
    sample_path,
    zero_path,
)
from .forward import (
    SwallowReport,
    compose_inverse_maps,
    constant_backward_map,
    constant_forward_map,
    integrate_forward,
    inverse_segment_map,
    linear_driver_reference_curve,
    trace_interpolated_driver,
)
from .halfplane import (
    BoundaryStateError,
    HalfPlanePoint,
    TimeGrid,
    Trace,
    require_interior,
    sqrt_upper,
)
from .lab import (
    BoundParams,
    ErrorReport,
    MomentEstimate,
    StudyResult,
    convergence_study,
    fit_order,
    lp_distance,
    phi1,
    phi2,
    predicted_second_moment,
    second_moment_stat,
    sup_distance,
    theorem_mesh_bound,
    theorem_regime_steps,
)
from .splitting import (
    AdaptiveResult,
    SchemeConfig,
    SchemeKind,
    adaptive_run,
    auto_y0,
    compose_constant_maps,
    dense_eval,
    flow_l0,
    flow_l1,
    nv_endpoint_ensemble,
    nv_step,
    run_euler,
    run_nv,
    run_scheme,
)

__version__ = "0.1.0"

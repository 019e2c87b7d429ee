"""Convexity-constrained 2D shape optimization with optimality certificates.

Shapes are convex bodies described by the reciprocal radius u(theta) on a
periodic grid; convexity is the linear constraint u'' + u >= 0.  The
package minimizes boundary integrals of G(theta, u, u') under an annulus
box or an area equality, recovers KKT certificates, probes second-order
necessity, and classifies whether optimizers are polygons.
"""

from .certificates import (
    KKTCertificate,
    SecondOrderProbe,
    build_probe,
    corner_count_bound,
    default_probe_suite,
    recover_multipliers,
    second_order_check,
    stationarity_test,
)
from .functionals import (
    BUILTIN_NAMES,
    DerivativeBounds,
    FunctionalSpec,
    apply_cutoff,
    builtin,
    derivative_bounds,
    eval_functional,
    gradient,
    second_order_form,
)
from .geometry import (
    ShapeStructure,
    StructureTolerances,
    analyze_structure,
    area,
    area_gradient,
    area_hessian_form,
    boundary_points,
    curvature,
    export_csv,
    export_svg,
    perimeter,
)
from .periodic import (
    ConvexityMeasure,
    FeasibilityReport,
    PeriodicGrid,
    RadialFunction,
    check_feasibility,
    convexity_measure,
    lipschitz_bound_check,
    make_grid,
    read_radial_csv,
    staggered_derivative,
)
from .problem import AnnulusRegime, ProblemSpec, VolumeRegime
from .solver import (
    SolveResult,
    SolverError,
    SolverOptions,
    multistart,
    project_feasible,
    solve,
)

__version__ = "0.1.0"

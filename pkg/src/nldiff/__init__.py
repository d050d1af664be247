"""Meshfree solver for 2D nonlocal diffusion with flux volume constraints.

Collocation with generalized moving least squares stencils, a
second-order flux boundary treatment applied on an interior collar, and
a manufactured-solution harness for convergence studies.
"""

from .assembly import (
    AssemblyError,
    DegenerateCornerFrame,
    NonlocalSystem,
    ProblemData,
    RowKind,
    assemble,
)
from .geometry import (
    ContourLeavesNeumannRegion,
    DomainSpec,
    NonUniqueProjection,
    OutsideComputationalDomain,
    Projection,
    RegionTag,
    Shape,
    classify,
    contour_point,
    inside,
    project,
)
from .gmls import (
    InsufficientNeighbors,
    PointCloud,
    SingularNormalEquations,
    Stencil,
    basis_eval,
    build_grid_cloud,
    build_neighbors,
    functional_row,
)
from .harness import (
    CASES,
    ConvergenceReport,
    ManufacturedCase,
    error_norms,
    run_convergence,
    run_verification_suite,
)
from .kernels import KernelSet, gmls_weight, h_delta, j_delta
from .quadrature import (
    QuadratureConfig,
    RegionDecompositionFailure,
    Side,
    contour_integral,
    integrate_ball_region,
    m_delta,
)
from .solver import Method, NoConvergence, SingularMatrix, SolveReport, solve

__version__ = "0.1.0"

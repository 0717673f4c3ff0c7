"""P1 finite elements for the Laplace equation with a quadratic Robin boundary condition."""
from .analysis import (
    AdmissibilityError,
    AdmissibilityReport,
    TraceConstants,
    compute_constants,
    corrosion_to_coefficients,
    estimate_beta1,
    estimate_beta2,
    estimate_trace_constants,
)
from .assembly import BoundaryField, DofMap, assemble_stiffness, build_dof_map
from .geometry import (
    AngularPartition,
    BoundaryTag,
    Mesh,
    build_disk_mesh,
    build_half_disk_mesh,
    refine_uniform,
    validate_partition,
)
from .linalg import SolverError, generalized_rayleigh_max, solve_spd
from .solver import (
    PicardReport,
    ProblemSpec,
    picard_solve,
    solve_intermediate,
    solve_linear_robin,
    verify_solution,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AdmissibilityReport", "AngularPartition", "BoundaryField", "BoundaryTag",
    "DofMap", "Mesh", "PicardReport", "ProblemSpec", "SolverError", "TraceConstants",
    "assemble_stiffness", "build_disk_mesh", "build_dof_map", "build_half_disk_mesh",
    "compute_constants", "corrosion_to_coefficients", "estimate_beta1", "estimate_beta2",
    "estimate_trace_constants", "generalized_rayleigh_max", "picard_solve", "refine_uniform",
    "solve_intermediate", "solve_linear_robin", "solve_spd", "validate_partition", "verify_solution",
]

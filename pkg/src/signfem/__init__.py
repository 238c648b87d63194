"""Adaptive P1 finite elements with residual a posteriori error
estimation for 2D diffusion problems with a sign-changing coefficient."""

from .adapt import (
    ConvergenceTable,
    LevelData,
    Row,
    RunResult,
    convergence_rate,
    mark,
    run_loop,
    tail_rate,
)
from .assembly import (
    AssemblyError,
    DiscreteSolution,
    ErrorNorms,
    SingularFactorizationError,
    SparseSystem,
    apply_dirichlet,
    assemble,
    assemble_load,
    assemble_mass,
    build_system,
    compute_errors,
    local_stiffness,
    solve,
)
from .estimator import (
    ElementIndicators,
    EstimatorReport,
    aggregate,
    compute_indicators,
    efficiency_ratios,
    element_means,
)
from .mesh import (
    GEOMETRIES,
    LShapedInterface,
    Mesh,
    MeshError,
    SymmetricSquare,
    build_structured_mesh,
    from_arrays,
    read_mesh,
    refine_marked,
    refine_uniform,
    write_mesh,
)
from .problem import (
    Coefficient,
    PolynomialSolution,
    ProblemConfig,
    SingularPointError,
    SingularSolution,
    exact_eval,
    polynomial_problem,
    singular_constants,
    singular_exponent,
    singular_problem,
    source_eval,
    transmission_matrix,
)
from .tcoercivity import (
    EigenSolveError,
    MirrorSymmetryError,
    apply_t_operator,
    clement_interpolate,
    estimate_kr,
    estimate_kr_and_coercivity,
    harmonic_extension_seminorm,
    lift_trace,
    min_coercivity_eigenvalue,
    verify_coercivity,
)

__version__ = "0.1.0"

"""Weak Galerkin finite elements for 2D linear parabolic problems.

Library layout:

- ``mesh``: structured unit-square triangulations and connectivity
- ``basis``: polynomial bases and quadrature
- ``space``: the weak space (DOFs, projections, weak gradient, stabilizers)
- ``assembly``: global sparse operators and load vectors
- ``linalg``: SPD factorizations and conjugate gradients
- ``solvers``: Ritz projection and the backward-Euler march
- ``analysis``: error norms and observed convergence orders
- ``harness``: convergence studies, table emission, golden comparisons
- ``cli``: the ``wgfem`` command line driver
"""

from .analysis import (
    CONVERGED,
    NI_INCONSISTENT,
    NI_UNSTABLE,
    ConvergenceRecord,
    error_field,
    h1_seminorm,
    l2_norm,
    observed_orders,
    triple_bar_norm,
)
from .assembly import (
    LoadVector,
    SparseOperator,
    assemble_consistency_forms,
    assemble_h1_gram,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
)
from .basis import EdgeBasis, QuadratureRule, TriBasis, dim_pk, gauss_rule, triangle_rule
from .linalg import Factorization, MaxIterations, NotPositiveDefinite, cg_solve, factorize
from .mesh import Mesh, build_uniform_square_mesh, edge_geometry, write_vtk
from .solvers import (
    PROBLEMS,
    InstabilityDetected,
    ParabolicProblem,
    TimeGrid,
    backward_euler_march,
    get_problem,
    initial_field,
    ritz_projection,
)
from .space import (
    DofMap,
    ElementFrame,
    ElementOperators,
    WGConfig,
    WeakField,
    build_element_operators,
    build_stabilizer_local,
    build_weak_gradient,
    project_edge,
    project_field,
    project_interior,
    project_vector,
)

__version__ = "0.1.0"

"""Topology optimization with a learned surrogate-gradient fast path."""

from .fem import (
    BoundarySpec,
    DofMap,
    SingularSystemError,
    SolverError,
    StructuredGrid,
    assemble,
    build_dof_map,
    element_stiffness_elastic,
    element_stiffness_heat,
    solve,
    solve_cg,
    solve_direct,
)
from .simp import (
    DensityField,
    Evaluation,
    FilterSpec,
    MaterialModel,
    ProblemSpec,
    density_filter,
    evaluate,
    filter_chain_rule,
    interpolate,
    volume_fraction,
)

__version__ = "0.1.0"

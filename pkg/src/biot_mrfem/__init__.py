"""Four-field and multipoint rotation-flux mixed finite elements for Biot poroelasticity in 2D."""

from .mesh import Mesh, BoundaryConfig, unit_square_mesh, refine_uniform, mesh_stats, read_mesh
from .spaces import FESpace, FieldState, build_space, interpolate
from .system import MaterialParams, BlockSystem, assemble_biot, symmetrize, solve_direct, time_loop
from .reduction import condense, recover
from .solver import minres, build_preconditioner, parameter_sweep
from .verify import make_case, convergence_study, weighted_norm_X, energy_norm

__all__ = [
    "Mesh",
    "BoundaryConfig",
    "unit_square_mesh",
    "refine_uniform",
    "mesh_stats",
    "read_mesh",
    "FESpace",
    "FieldState",
    "build_space",
    "interpolate",
    "MaterialParams",
    "BlockSystem",
    "assemble_biot",
    "symmetrize",
    "solve_direct",
    "time_loop",
    "condense",
    "recover",
    "minres",
    "build_preconditioner",
    "parameter_sweep",
    "make_case",
    "convergence_study",
    "weighted_norm_X",
    "energy_norm",
]

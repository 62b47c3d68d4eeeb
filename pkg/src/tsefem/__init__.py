"""Time-series expansion finite elements for incompressible flow."""
from .mesh import Mesh, build_channel_cylinder_mesh, build_unit_square_mesh, read_gmsh
from .spaces import MixedSpace, build_taylor_hood
from .assembly import AssembledForms, assemble_forms, apply_constraints
from .resummation import factorial_sum, partial_sum
from .series import BCSeries, ModeSet, StabilizationPlan, compute_modes, mode_error

__version__ = "0.1.0"

__all__ = [
    "Mesh", "build_channel_cylinder_mesh", "build_unit_square_mesh", "read_gmsh",
    "MixedSpace", "build_taylor_hood", "AssembledForms", "assemble_forms", "apply_constraints",
    "factorial_sum", "partial_sum", "BCSeries", "ModeSet", "StabilizationPlan",
    "compute_modes", "mode_error",
]

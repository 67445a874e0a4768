"""Pure-traction elasticity with the gap functional F: evaluators, solvers and demos."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"

from .algebra import SkewParam, euler_rodrigues, skew_from_params, skew_square
from .constitutive import INFINITE_ENERGY, Material
from .functionals import eval_E, eval_F, eval_F_closed, eval_Fh
from .loads import LoadSystem, classify_compatibility, inf_F_status
from .mesh import AffineField, BoxDomain3, Mesh, generate_mesh, normalize_frame
from .solvers import gamma_sweep, minimize_F, minimize_Fh, solve_linear_elasticity

__all__ = [
    "AffineField", "BoxDomain3", "INFINITE_ENERGY", "LoadSystem", "Material", "Mesh", "SkewParam",
    "classify_compatibility", "euler_rodrigues", "eval_E", "eval_F", "eval_F_closed", "eval_Fh",
    "gamma_sweep", "generate_mesh", "inf_F_status", "minimize_F", "minimize_Fh", "normalize_frame",
    "skew_from_params", "skew_square", "solve_linear_elasticity",
]

"""Space-time generalized multiscale finite elements for linear transport."""
from .mesh import MeshConfig, SpaceTimeMesh, build_mesh
from .fe_core import CG, DG
from .fine_solver import TransportProblem, solve_fine

__all__ = ["CG", "DG", "MeshConfig", "SpaceTimeMesh", "TransportProblem", "build_mesh", "solve_fine"]
__version__ = "0.1.0"

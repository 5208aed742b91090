"""Two-level Schwarz preconditioning of quasi-optimally shifted Schroedinger eigenproblems."""
from .cell_solver import CellSolution, solve_cell_problem
from .eigen import InnerSolver, shifted_ipm, si_lopcg
from .grid_fem import (PlaneGradient3D, SeparableSinSq, ZeroPotential, assemble, build_dof_map,
                       build_grid)
from .pipeline import Setup, build_precond, build_setup

__version__ = "0.1.0"

__all__ = ["CellSolution", "InnerSolver", "PlaneGradient3D", "SeparableSinSq", "Setup",
           "ZeroPotential", "assemble", "build_dof_map", "build_grid", "build_precond",
           "build_setup", "shifted_ipm", "si_lopcg", "solve_cell_problem"]

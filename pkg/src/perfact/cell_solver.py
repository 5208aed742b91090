"""Ground state of the x-periodic unit-cell problem and its periodic extension."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid_fem import (DIRICHLET, PERIODIC, DofMap, PotentialSpec, TensorGrid, assemble,
                       build_dof_map, build_grid, potential_at_quadrature)
from .sparse_core import dense_gevp, factor_solve, factorize, shift_combine

CELL_TOL = 1e-12
CELL_MAXIT = 500
DENSE_LIMIT = 2000


class CellSolveError(RuntimeError):
    pass


@dataclass
class CellSolution:
    sigma: float
    psi_cell: np.ndarray
    grid: TensorGrid
    dofs: DofMap
    residual_norm: float
    iterations: int
    method: str

    def extend(self, gridL: TensorGrid, dofsL: DofMap) -> np.ndarray:
        return periodic_extend(self, gridL, dofsL)


def solve_cell_problem(grid1: TensorGrid, V: PotentialSpec, tol: float = CELL_TOL,
                       maxit: int = CELL_MAXIT) -> CellSolution:
    """Lowest eigenpair of the x-periodic, y-clamped unit-cell pencil.

    Inverse iteration on ``A - s B`` with ``s = min(0, min V) - 1`` (V taken
    at the quadrature points), which keeps the shifted operator positive
    definite even when the cell operator itself is singular.
    """
    if grid1.L != 1:
        raise ValueError("the cell problem is posed on a grid with L = 1")
    dofs = build_dof_map(grid1, PERIODIC)
    ops = assemble(grid1, V, dofs)
    A, B = ops.A, ops.B_mass
    s = min(0.0, float(np.min(potential_at_quadrature(grid1, V)))) - 1.0
    x = np.ones(dofs.n_free)
    iterations = 0
    method = "inverse-iteration"
    res = np.inf
    try:
        F = factorize(shift_combine(A, B, s))
        for iterations in range(1, maxit + 1):
            x = factor_solve(F, B @ x)
            x /= np.sqrt(x @ (B @ x))
            Ax = A @ x
            rho = float(x @ Ax)
            res = float(np.linalg.norm(Ax - rho * (B @ x)))
            if res <= tol * np.linalg.norm(Ax):
                break
        else:
            raise CellSolveError(
                f"cell inverse iteration did not converge in {maxit} steps (residual {res:.3e})")
    except CellSolveError:
        if dofs.n_free > DENSE_LIMIT:
            raise
        w, Vec = dense_gevp(A.toarray(), B.toarray())
        x = Vec[:, 0]
        method = "dense"
    x = x / np.sqrt(x @ (B @ x))
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    Ax = A @ x
    sigma = float(x @ Ax)
    res = float(np.linalg.norm(Ax - sigma * (B @ x)))
    return CellSolution(sigma, x, grid1, dofs, res, iterations, method)


def cell_problem(p: int, q: int, ell: float, n_per_unit: int, V: PotentialSpec) -> CellSolution:
    return solve_cell_problem(build_grid(p, q, 1, ell, n_per_unit), V)


def periodic_extend(sol: CellSolution, gridL: TensorGrid, dofsL: DofMap) -> np.ndarray:
    """Copy the cell ground state onto the free DOFs of a larger grid."""
    g1 = sol.grid
    if (gridL.n_per_unit, gridL.p, gridL.q) != (g1.n_per_unit, g1.p, g1.q) or gridL.ell != g1.ell:
        raise ValueError("grid is not built from translated copies of the cell grid")
    nodes = dofsL.dof_nodes()
    mi = gridL.node_multi_index(nodes)
    mi[:, : gridL.p] %= gridL.n_per_unit
    cell_dofs = sol.dofs.node_to_dof[g1.node_index(mi)]
    if np.any(cell_dofs < 0):
        raise ValueError("target DOF maps to a clamped cell node")
    return sol.psi_cell[cell_dofs].copy()


def global_dirichlet_extension(sol: CellSolution, gridL: TensorGrid) -> np.ndarray:
    return periodic_extend(sol, gridL, build_dof_map(gridL, DIRICHLET))


def dump_cell_csv(sol: CellSolution, path) -> None:
    nodes = sol.dofs.dof_nodes()
    coords = sol.grid.node_coords(nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", format(sol.sigma, ".17g")])
        w.writerow(["node"] + [f"z{k}" for k in range(coords.shape[1])] + ["value"])
        for node, c, v in zip(nodes, coords, sol.psi_cell):
            w.writerow([int(node)] + [format(float(t), ".17g") for t in c] + [format(float(v), ".17g")])

import numpy as np
import pytest
import scipy.linalg as sla

from perfact.cell_solver import (cell_problem, global_dirichlet_extension, periodic_extend,
                                 solve_cell_problem)
from perfact.grid_fem import (DIRICHLET, SeparableSinSq, ZeroPotential, assemble, build_dof_map,
                              build_grid)
from perfact.sparse_core import shift_combine


def test_zero_potential_matches_1d_dirichlet():
    n = 8
    sol = cell_problem(1, 1, 1.0, n, ZeroPotential())
    g1 = build_grid(1, 0, 1, 1.0, n)
    ops = assemble(g1, ZeroPotential(), build_dof_map(g1, DIRICHLET))
    lam = sla.eigh(ops.A_stiff.toarray(), ops.B_mass.toarray(), eigvals_only=True)[0]
    assert abs(sol.sigma - lam) <= 1e-10 * lam
    vals = sol.psi_cell.reshape(n - 1, n, order="C")  # rows: y index, cols: x index
    assert np.max(np.ptp(vals, axis=1)) <= 1e-9 * np.max(np.abs(vals))


def test_ground_state_properties():
    sol = cell_problem(1, 1, 1.0, 10, SeparableSinSq())
    g, d = sol.grid, sol.dofs
    B = assemble(g, SeparableSinSq(), d).B_mass
    A = assemble(g, SeparableSinSq(), d).A
    assert np.all(sol.psi_cell > 0)
    assert np.isclose(sol.psi_cell @ (B @ sol.psi_cell), 1.0)
    Ax = A @ sol.psi_cell
    assert np.linalg.norm(Ax - sol.sigma * (B @ sol.psi_cell)) <= 1e-11 * np.linalg.norm(Ax)


def test_rejects_large_cell():
    with pytest.raises(ValueError):
        solve_cell_problem(build_grid(1, 1, 2, 1.0, 4), ZeroPotential())


def test_extension_l1_and_constant():
    sol = cell_problem(1, 1, 1.0, 6, SeparableSinSq())
    g1 = sol.grid
    ext = global_dirichlet_extension(sol, g1)
    d = build_dof_map(g1, DIRICHLET)
    nodes = d.dof_nodes()
    assert np.array_equal(ext, sol.psi_cell[sol.dofs.node_to_dof[nodes]])
    z = cell_problem(1, 0, 1.0, 5, ZeroPotential())
    gL = build_grid(1, 0, 3, 1.0, 5)
    e = periodic_extend(z, gL, build_dof_map(gL, DIRICHLET))
    assert np.allclose(e, e[0])


def test_extension_is_zero_energy_in_interior():
    V = SeparableSinSq()
    sol = cell_problem(1, 1, 1.0, 8, V)
    g = build_grid(1, 1, 4, 1.0, 8)
    d = build_dof_map(g, DIRICHLET)
    ops = assemble(g, V, d)
    A_s = shift_combine(ops.A, ops.B_mass, sol.sigma)
    psi = periodic_extend(sol, g, d)
    r = A_s @ psi
    mi = g.node_multi_index(d.dof_nodes())
    interior = (mi[:, 0] >= 2) & (mi[:, 0] <= g.node_shape[0] - 3)
    scale = abs(A_s.scipy).sum(axis=1).max() * np.linalg.norm(psi)
    assert np.max(np.abs(r[interior])) <= 1e-9 * scale
    assert np.max(np.abs(r[~interior])) > 1e-6 * scale


def test_extension_rejects_mismatched_grid():
    sol = cell_problem(1, 1, 1.0, 4, ZeroPotential())
    g = build_grid(1, 1, 2, 1.0, 6)
    with pytest.raises(ValueError):
        periodic_extend(sol, g, build_dof_map(g, DIRICHLET))

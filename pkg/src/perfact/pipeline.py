"""Assembly of a complete shifted problem: grid, operators, shift, decomposition."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import decomposition as dec
from .cell_solver import CellSolution, periodic_extend, solve_cell_problem
from .grid_fem import (DIRICHLET, DofMap, OperatorSet, PotentialSpec, TensorGrid, assemble,
                       build_dof_map, build_grid, potential_at_quadrature)
from .precond import (AS, RAS, SchwarzPreconditioner, build_perfact_coarse,
                      build_preconditioner)
from .sparse_core import CsrMatrix, shift_combine

PRECONDITIONERS = ("as1", "as2", "ras1", "ras2")


@dataclass
class Setup:
    grid: TensorGrid
    dofs: DofMap
    V: PotentialSpec
    ops: OperatorSet = field(repr=False)
    cell: CellSolution = field(repr=False)
    A_sigma: CsrMatrix = field(repr=False)
    psi: np.ndarray = field(repr=False)
    part: dec.Partition = field(repr=False)
    pu: dec.PartitionOfUnity = field(repr=False)
    neighborhoods: List[dec.PeriodicNeighborhood] = field(repr=False)
    combo: dec.ComboConstants

    @property
    def sigma(self) -> float:
        return self.cell.sigma

    @property
    def A(self) -> CsrMatrix:
        return self.ops.A

    @property
    def B(self) -> CsrMatrix:
        return self.ops.B_mass

    @property
    def potential_floor(self) -> float:
        """min(0, min V) over quadrature points; shifting by it makes V >= 0."""
        return min(0.0, float(np.min(potential_at_quadrature(self.grid, self.V))))


def cell_for(p: int, q: int, ell: float, n_per_unit: int, V: PotentialSpec) -> CellSolution:
    return solve_cell_problem(build_grid(p, q, 1, ell, n_per_unit), V)


def build_setup(p: int, q: int, L: int, ell: float, n_per_unit: int, V: PotentialSpec,
                partition: str = dec.SLABS, N: Optional[int] = None,
                counts: Optional[Sequence[int]] = None, delta: int = 1,
                pu: str = dec.EQUAL, partition_file=None,
                cell: Optional[CellSolution] = None) -> Setup:
    grid = build_grid(p, q, L, ell, n_per_unit)
    dofs = build_dof_map(grid, DIRICHLET)
    ops = assemble(grid, V, dofs)
    if cell is None:
        cell = cell_for(p, q, ell, n_per_unit, V)
    A_sigma = shift_combine(ops.A, ops.B_mass, cell.sigma)
    psi = periodic_extend(cell, grid, dofs)
    base = dec.build_structured_partition(grid, dofs, partition, N=N, counts=counts,
                                          path=partition_file)
    part = dec.extend_overlap(base, delta)
    weights = dec.build_pu(part, pu)
    nbs = dec.periodic_neighborhoods(part)
    combo = dec.combo_constants(part, nbs, A_sigma)
    return Setup(grid, dofs, V, ops, cell, A_sigma, psi, part, weights, nbs, combo)


def build_precond(setup: Setup, name: str, include_boundary: bool = True,
                  threads: int = 1) -> SchwarzPreconditioner:
    """Preconditioner by short name: as1, as2, ras1, ras2."""
    name = name.lower()
    if name not in PRECONDITIONERS:
        raise ValueError(f"unknown preconditioner {name!r}")
    variant = AS if name.startswith("as") else RAS
    levels = int(name[-1])
    coarse = None
    if levels == 2:
        coarse = build_perfact_coarse(setup.psi, setup.part, setup.pu, setup.A_sigma,
                                      include_boundary, setup.neighborhoods)
    return build_preconditioner(setup.A_sigma, setup.part, setup.pu, variant, levels, coarse,
                                threads)

"""Uniform tensor grids and Q1 finite element assembly.

Nodes and elements are numbered lexicographically with the first (x1)
direction running fastest.  Directions ``0..p-1`` are the expanding ones of
length ``L``; the remaining ``q`` directions have length ``ell``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .sparse_core import CsrMatrix

DIRICHLET = "dirichlet"
PERIODIC = "periodic"
NEUMANN = "neumann"  # x-faces free, fixed-direction faces clamped
FREE = "free"
DOF_MODES = (DIRICHLET, PERIODIC, NEUMANN, FREE)

# 3-point Gauss rule on [0, 1]
_G3_PTS = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
_G3_WTS = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True)
class TensorGrid:
    p: int
    q: int
    L: int
    ell: float
    n_per_unit: int

    @property
    def dim(self) -> int:
        return self.p + self.q

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_unit

    @property
    def elem_shape(self) -> tuple:
        ny = int(round(self.ell * self.n_per_unit))
        return tuple([self.L * self.n_per_unit] * self.p + [ny] * self.q)

    @property
    def node_shape(self) -> tuple:
        return tuple(s + 1 for s in self.elem_shape)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.elem_shape))

    @property
    def lengths(self) -> tuple:
        return tuple([float(self.L)] * self.p + [float(self.ell)] * self.q)

    def node_multi_index(self, nodes=None) -> np.ndarray:
        """Integer coordinates of nodes, shape (k, dim)."""
        if nodes is None:
            nodes = np.arange(self.n_nodes)
        return np.stack(np.unravel_index(np.asarray(nodes), self.node_shape, order="F"), axis=-1)

    def node_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(multi.T), self.node_shape, order="F")

    def node_coords(self, nodes=None) -> np.ndarray:
        return self.node_multi_index(nodes) * self.h

    def element_multi_index(self, elems=None) -> np.ndarray:
        if elems is None:
            elems = np.arange(self.n_elements)
        return np.stack(np.unravel_index(np.asarray(elems), self.elem_shape, order="F"), axis=-1)

    def element_nodes(self, elems=None) -> np.ndarray:
        """Connectivity (k, 2**dim); local corners ordered with x1 fastest."""
        em = self.element_multi_index(elems)
        corners = _corner_offsets(self.dim)
        multi = em[:, None, :] + corners[None, :, :]
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.node_shape, order="F")

    def boundary_node_mask(self) -> np.ndarray:
        mi = self.node_multi_index()
        top = np.array(self.node_shape) - 1
        return np.any((mi == 0) | (mi == top), axis=1)


def _corner_offsets(d: int) -> np.ndarray:
    # x1 fastest: reverse the product order
    return np.array([c[::-1] for c in itertools.product((0, 1), repeat=d)], dtype=np.int64)


def build_grid(p: int, q: int, L: int, ell: float, n_per_unit: int) -> TensorGrid:
    if p < 1 or q < 0 or p + q > 3:
        raise ValueError(f"unsupported dimensions p={p}, q={q}")
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    if int(n_per_unit) != n_per_unit or n_per_unit < 1:
        raise ValueError("n_per_unit must be a positive integer")
    ny = ell * n_per_unit
    if q > 0 and (abs(ny - round(ny)) > 1e-9 or round(ny) < 1):
        raise ValueError(f"ell * n_per_unit = {ny} is not a positive integer")
    return TensorGrid(int(p), int(q), int(L), float(ell), int(n_per_unit))


# ---------------------------------------------------------------- DOF maps

@dataclass(frozen=True)
class DofMap:
    mode: str
    node_to_dof: np.ndarray = field(repr=False)
    n_free: int

    @property
    def free_dof_count(self) -> int:
        return self.n_free

    def dof_nodes(self) -> np.ndarray:
        """Representative (smallest) node of every DOF."""
        out = np.full(self.n_free, -1, dtype=np.int64)
        nodes = np.nonzero(self.node_to_dof >= 0)[0]
        dofs = self.node_to_dof[nodes]
        # reversed assignment leaves the smallest node index in place
        out[dofs[::-1]] = nodes[::-1]
        return out


def _number(node_to_master: np.ndarray, constrained: np.ndarray, mode: str) -> DofMap:
    n = node_to_master.size
    masters = np.unique(node_to_master[~constrained])
    dof_of_master = np.full(n, -1, dtype=np.int64)
    dof_of_master[masters] = np.arange(masters.size)
    node_to_dof = np.where(constrained, -1, dof_of_master[node_to_master])
    return DofMap(mode, node_to_dof.astype(np.int64), int(masters.size))


def build_dof_map(grid: TensorGrid, mode: str = DIRICHLET) -> DofMap:
    """Constraint bookkeeping for the assembled spaces.

    ``dirichlet`` clamps every boundary node.  ``periodic`` identifies the
    faces x_k = 0 and x_k = L for the expanding directions and clamps the
    fixed-direction faces.  ``neumann`` leaves x-faces free, ``free`` clamps
    nothing.
    """
    if mode not in DOF_MODES:
        raise ValueError(f"unknown dof mode {mode!r}")
    if mode == PERIODIC and grid.p == 0:
        raise ValueError("periodic mode needs an expanding direction")
    mi = grid.node_multi_index()
    top = np.array(grid.node_shape) - 1
    on_face = (mi == 0) | (mi == top)
    x_face = on_face[:, : grid.p].any(axis=1)
    y_face = on_face[:, grid.p:].any(axis=1) if grid.q else np.zeros(grid.n_nodes, bool)
    master = np.arange(grid.n_nodes)
    if mode == DIRICHLET:
        constrained = x_face | y_face
    elif mode == FREE:
        constrained = np.zeros(grid.n_nodes, bool)
    elif mode == NEUMANN:
        constrained = y_face
    else:
        constrained = y_face
        wrapped = mi.copy()
        for k in range(grid.p):
            wrapped[:, k] = np.where(mi[:, k] == top[k], 0, mi[:, k])
        master = grid.node_index(wrapped)
    return _number(master, constrained, mode)


def box_dof_map(grid: TensorGrid, dofs: DofMap, lo: Sequence[int], hi: Sequence[int],
                periodic: bool) -> DofMap:
    """DOF map of a period-aligned sub-box on the global DOF numbering.

    ``lo``/``hi`` are node-index bounds per expanding direction.  With
    ``periodic`` the face at ``hi`` is identified with the face at ``lo``.
    Nodes outside the box are constrained.
    """
    mi = grid.node_multi_index()
    inside = np.ones(grid.n_nodes, bool)
    for k in range(grid.p):
        inside &= (mi[:, k] >= lo[k]) & (mi[:, k] <= hi[k])
    node_to_dof = np.where(inside, dofs.node_to_dof, -1)
    if periodic:
        wrapped = mi.copy()
        for k in range(grid.p):
            wrapped[:, k] = np.where(mi[:, k] == hi[k], lo[k], mi[:, k])
        src = grid.node_index(wrapped)
        node_to_dof = np.where(inside, dofs.node_to_dof[src], -1)
    return DofMap("box-periodic" if periodic else "box-neumann", node_to_dof, dofs.n_free)


# ---------------------------------------------------------------- potentials

class PotentialSpec:
    """Potential V on Omega_L; ``periodic`` marks unit period in x-directions."""

    periodic: bool = True
    name: str = "potential"

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.name}


class ZeroPotential(PotentialSpec):
    name = "zero"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.zeros(z.shape[:-1])


@dataclass
class SeparableSinSq(PotentialSpec):
    """amplitude * prod_k sin^4(pi z_k) over the first two coordinates."""

    amplitude: float = 100.0
    name = "separable_sinsq"
    periodic = True

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        s = np.sin(np.pi * z[..., 0]) ** 2
        t = np.sin(np.pi * z[..., 1]) ** 2 if z.shape[-1] > 1 else 1.0
        return self.amplitude * s * s * t * t

    def describe(self):
        return {"kind": self.name, "amplitude": self.amplitude}


class PlaneGradient3D(PotentialSpec):
    """10 (4 + sin 2pi x + sin 4pi x + 2 sin 2pi y + 2 sin 4pi y + z)."""

    name = "plane_gradient_3d"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        x, y, w = z[..., 0], z[..., 1], z[..., 2]
        tp = 2 * np.pi
        return 10.0 * (4 + np.sin(tp * x) + np.sin(2 * tp * x)
                       + 2 * np.sin(tp * y) + 2 * np.sin(2 * tp * y) + w)


@dataclass
class CallablePotential(PotentialSpec):
    f: Callable[[np.ndarray], np.ndarray] = None
    periodic: bool = False
    name = "callable"

    def __call__(self, z):
        return np.asarray(self.f(np.asarray(z, dtype=float)), dtype=float)


def evaluate_potential(V: PotentialSpec, z) -> float | np.ndarray:
    out = V(np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- assembly

@dataclass
class OperatorSet:
    A_stiff: CsrMatrix
    A_pot: CsrMatrix
    B_mass: CsrMatrix

    @property
    def A(self) -> CsrMatrix:
        return CsrMatrix(self.A_stiff.scipy + self.A_pot.scipy, True)


def _reference_matrices(d: int, h: float):
    k1 = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m1 = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0

    def kron_all(mats):
        # x1 fastest corner order: x1 factor is the innermost kron
        out = np.ones((1, 1))
        for m in reversed(mats):
            out = np.kron(out, m)
        return out

    mass = kron_all([m1] * d)
    stiff = sum(kron_all([k1 if j == k else m1 for j in range(d)]) for k in range(d))
    return stiff, mass


def _quadrature(d: int):
    pts = np.array([c[::-1] for c in itertools.product(range(3), repeat=d)])
    xi = _G3_PTS[pts]  # (nq, d) in [0,1]
    w = np.prod(_G3_WTS[pts], axis=1)
    corners = _corner_offsets(d)
    # Q1 shape values: prod over directions of (1 - xi) or xi
    shape = np.prod(np.where(corners[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :]), axis=2)
    return xi, w, shape


def potential_at_quadrature(grid: TensorGrid, V: PotentialSpec, elems=None) -> np.ndarray:
    """V at the 3-point Gauss points of each element, shape (k, 3**dim).

    Periodic potentials are evaluated at in-cell coordinates so translated
    elements see bitwise identical values.
    """
    em = grid.element_multi_index(elems)
    xi, _, _ = _quadrature(grid.dim)
    n = grid.n_per_unit
    base = em.astype(float)
    if V.periodic:
        base[:, : grid.p] = em[:, : grid.p] % n
    z = (base[:, None, :] + xi[None, :, :]) / n
    return V(z)


def assemble(grid: TensorGrid, V: PotentialSpec, dofs: DofMap, elements=None) -> OperatorSet:
    """Assemble stiffness, potential and mass matrices on the free DOFs.

    ``elements`` optionally restricts assembly to a subset of elements.
    """
    d = grid.dim
    h = grid.h
    stiff_ref, mass_ref = _reference_matrices(d, h)
    elems = np.arange(grid.n_elements) if elements is None else np.asarray(elements)
    conn = grid.element_nodes(elems)
    ldofs = dofs.node_to_dof[conn]  # (ne, nloc)
    nloc = conn.shape[1]
    _, w, shape = _quadrature(d)
    vq = potential_at_quadrature(grid, V, elems) * (w * h ** d)[None, :]
    pot = np.einsum("eq,qa,qb->eab", vq, shape, shape, optimize=True)

    rows = np.repeat(ldofs, nloc, axis=1).ravel()
    cols = np.tile(ldofs, (1, nloc)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    rows, cols = rows[keep], cols[keep]
    ne = len(elems)
    n = dofs.n_free
    shape2 = (n, n)
    ks = np.broadcast_to(stiff_ref.ravel(), (ne, nloc * nloc)).ravel()[keep]
    ms = np.broadcast_to(mass_ref.ravel(), (ne, nloc * nloc)).ravel()[keep]
    ps = pot.reshape(ne, -1).ravel()[keep]

    def build(vals):
        M = CsrMatrix.from_coo(rows, cols, vals, shape2, symmetric=True)
        # exact symmetrization against summation-order roundoff
        return CsrMatrix(0.5 * (M.scipy + M.scipy.T), True)

    return OperatorSet(build(ks), build(ps), build(ms))


def assemble_load(grid: TensorGrid, dofs: DofMap, f: float = 1.0, elements=None) -> np.ndarray:
    """Load vector of a constant source term."""
    d = grid.dim
    elems = np.arange(grid.n_elements) if elements is None else np.asarray(elements)
    conn = grid.element_nodes(elems)
    ldofs = dofs.node_to_dof[conn].ravel()
    per_node = f * grid.h ** d / 2 ** d
    keep = ldofs >= 0
    return np.bincount(ldofs[keep], weights=np.full(keep.sum(), per_node), minlength=dofs.n_free)

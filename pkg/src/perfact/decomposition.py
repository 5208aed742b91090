"""Overlapping decompositions, partitions of unity and periodic neighborhoods."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.spatial import cKDTree

from .grid_fem import DofMap, TensorGrid
from .sparse_core import CsrMatrix, RestrictionOp

SLABS = "slabs"
UNIT_CELLS = "unit-cells"
BOXES = "boxes"
EXPLICIT = "explicit"

EQUAL = "equal"
DISTANCE = "distance"


class CoverError(ValueError):
    pass


@dataclass
class Partition:
    grid: TensorGrid
    dofs: DofMap
    N: int
    owner: np.ndarray = field(repr=False)  # element -> non-overlapping subdomain
    overlap_masks: List[np.ndarray] = field(repr=False)  # per subdomain, bool over elements
    delta: int
    dof_sets: List[np.ndarray] = field(repr=False)

    @property
    def nonoverlap_elems(self) -> List[np.ndarray]:
        return [np.nonzero(self.owner == i)[0] for i in range(self.N)]

    @property
    def overlap_elems(self) -> List[np.ndarray]:
        return [np.nonzero(m)[0] for m in self.overlap_masks]

    def restrictions(self) -> List[RestrictionOp]:
        n = self.dofs.n_free
        return [RestrictionOp.select(s, n, i) for i, s in enumerate(self.dof_sets)]

    def multiplicity(self) -> np.ndarray:
        mu = np.zeros(self.dofs.n_free, dtype=np.int64)
        for s in self.dof_sets:
            mu[s] += 1
        return mu


def _dof_set(grid: TensorGrid, dofs: DofMap, mask: np.ndarray) -> np.ndarray:
    conn = grid.element_nodes(np.nonzero(mask)[0])
    d = dofs.node_to_dof[conn].ravel()
    return np.unique(d[d >= 0])


def _from_owner(grid: TensorGrid, dofs: DofMap, owner: np.ndarray, N: int) -> Partition:
    owner = np.asarray(owner, dtype=np.int64)
    if owner.shape != (grid.n_elements,):
        raise ValueError("owner array must have one entry per element")
    if owner.min() < 0 or owner.max() >= N:
        raise ValueError("subdomain index out of range")
    masks = [owner == i for i in range(N)]
    if any(not m.any() for m in masks):
        raise ValueError("empty subdomain in partition")
    sets = [_dof_set(grid, dofs, m) for m in masks]
    return Partition(grid, dofs, N, owner, masks, 0, sets)


def cell_number(cell: Sequence[int], L: int) -> int:
    """0-based linear index of a cell multi-index, first direction fastest."""
    return int(sum(int(c) * L ** j for j, c in enumerate(cell)))


def build_structured_partition(grid: TensorGrid, dofs: DofMap, mode: str = SLABS,
                               N: Optional[int] = None, counts: Optional[Sequence[int]] = None,
                               path=None) -> Partition:
    """Non-overlapping element partition.

    ``slabs`` cuts the first direction into ``N`` equal slabs, ``unit-cells``
    uses the ``L**p`` period cells, ``boxes`` splits each direction into
    ``counts[k]`` equal parts and ``explicit`` reads an ``element subdomain``
    file.
    """
    em = grid.element_multi_index()
    shape = grid.elem_shape
    if mode == SLABS:
        N = grid.L if N is None else int(N)
        if N < 1 or shape[0] % N:
            raise ValueError(f"{N} slabs do not divide {shape[0]} elements along x1")
        owner = em[:, 0] // (shape[0] // N)
    elif mode == UNIT_CELLS:
        n = grid.n_per_unit
        owner = np.zeros(grid.n_elements, dtype=np.int64)
        for j in range(grid.p):
            owner += (em[:, j] // n) * grid.L ** j
        N = grid.L ** grid.p
    elif mode == BOXES:
        if counts is None or len(counts) != grid.dim:
            raise ValueError("boxes mode needs one count per direction")
        owner = np.zeros(grid.n_elements, dtype=np.int64)
        stride = 1
        for j, c in enumerate(counts):
            if c < 1 or shape[j] % c:
                raise ValueError(f"{c} boxes do not divide {shape[j]} elements in direction {j}")
            owner += (em[:, j] // (shape[j] // c)) * stride
            stride *= c
        N = int(stride)
    elif mode == EXPLICIT:
        owner, N = read_partition_file(path, grid.n_elements)
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return _from_owner(grid, dofs, owner, int(N))


def read_partition_file(path, n_elements: int):
    data = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("partition file needs two columns: element_index subdomain_index")
    owner = np.full(n_elements, -1, dtype=np.int64)
    owner[data[:, 0]] = data[:, 1]
    if np.any(owner < 0):
        raise CoverError("partition file leaves elements unassigned")
    return owner, int(owner.max()) + 1


def write_partition_file(part: Partition, path) -> None:
    with open(path, "w") as fh:
        for e, s in enumerate(part.owner):
            fh.write(f"{e} {int(s)}\n")


def extend_overlap(part: Partition, delta: int) -> Partition:
    """Grow every subdomain by ``delta`` layers of elements sharing a node with it."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    grid = part.grid
    shape = grid.elem_shape
    struct = ndimage.generate_binary_structure(grid.dim, grid.dim)
    masks = []
    for i in range(part.N):
        base = (part.owner == i).reshape(shape, order="F")
        grown = ndimage.binary_dilation(base, structure=struct, iterations=delta) if delta else base
        masks.append(grown.ravel(order="F"))
    sets = [_dof_set(grid, part.dofs, m) for m in masks]
    return Partition(grid, part.dofs, part.N, part.owner, masks, int(delta), sets)


# ---------------------------------------------------------------- partition of unity

@dataclass
class PartitionOfUnity:
    variant: str
    weights: List[np.ndarray] = field(repr=False)  # diagonal of D_i on dof_sets[i]
    dof_sets: List[np.ndarray] = field(repr=False)
    n: int

    def chi(self, i: int) -> np.ndarray:
        """Nodal function of subdomain ``i`` on the global free DOFs."""
        out = np.zeros(self.n)
        out[self.dof_sets[i]] = self.weights[i]
        return out

    def apply_sum(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        for s, w in zip(self.dof_sets, self.weights):
            out[s] += w * x[s]
        return out


def _node_mask(grid: TensorGrid, elem_mask: np.ndarray) -> np.ndarray:
    conn = grid.element_nodes(np.nonzero(elem_mask)[0])
    out = np.zeros(grid.n_nodes, bool)
    out[conn.ravel()] = True
    return out


def build_pu(part: Partition, variant: str = EQUAL) -> PartitionOfUnity:
    n = part.dofs.n_free
    mu = part.multiplicity()
    if np.any(mu == 0):
        raise CoverError(f"{int(np.sum(mu == 0))} DOFs are covered by no subdomain")
    if variant == EQUAL:
        weights = [1.0 / mu[s] for s in part.dof_sets]
        return PartitionOfUnity(EQUAL, weights, list(part.dof_sets), n)
    if variant != DISTANCE:
        raise ValueError(f"unknown partition of unity {variant!r}")

    grid = part.grid
    node_mi = grid.node_multi_index()
    gboundary = grid.boundary_node_mask()
    dof_nodes = part.dofs.dof_nodes()
    extent = float(sum(grid.lengths))
    dist = []
    for i in range(part.N):
        inside = _node_mask(grid, part.overlap_masks[i])
        outside = _node_mask(grid, ~part.overlap_masks[i])
        interface = inside & outside & ~gboundary
        d = np.zeros(n)
        s = part.dof_sets[i]
        if not interface.any():
            d[s] = extent
        else:
            tree = cKDTree(node_mi[interface])
            dd, _ = tree.query(node_mi[dof_nodes[s]], p=np.inf)
            d[s] = dd * grid.h
        dist.append(d)
    total = np.sum(dist, axis=0)
    if np.any(total <= 0):
        bad = int(np.nonzero(total <= 0)[0][0])
        raise CoverError(f"DOF {bad} lies on the interface of every subdomain containing it")
    weights = [d[s] / total[s] for d, s in zip(dist, part.dof_sets)]
    return PartitionOfUnity(DISTANCE, weights, list(part.dof_sets), n)


# ---------------------------------------------------------------- periodic neighborhoods

@dataclass
class PeriodicNeighborhood:
    subdomain: int
    lo: tuple  # cell bounds per expanding direction, lower
    hi: tuple  # upper (exclusive in cells)
    elements: np.ndarray = field(repr=False)
    boundary_touching: bool = False

    def bounds(self, grid: TensorGrid):
        """Box as ((lo, hi) per direction) in physical coordinates."""
        out = [(float(a), float(b)) for a, b in zip(self.lo, self.hi)]
        out += [(0.0, float(grid.ell))] * grid.q
        return tuple(out)

    def node_bounds(self, grid: TensorGrid):
        n = grid.n_per_unit
        return [a * n for a in self.lo], [b * n for b in self.hi]

    def cells(self, L: int) -> List[int]:
        ranges = [range(a, b) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*ranges, indexing="ij")
        return sorted(cell_number(c, L) for c in zip(*(g.ravel() for g in grids)))


def periodic_neighborhoods(part: Partition) -> List[PeriodicNeighborhood]:
    grid = part.grid
    n = grid.n_per_unit
    em = grid.element_multi_index()
    out = []
    for i, m in enumerate(part.overlap_masks):
        e = em[m]
        lo = tuple(int(e[:, k].min()) // n for k in range(grid.p))
        hi = tuple(-(-(int(e[:, k].max()) + 1) // n) for k in range(grid.p))
        inside = np.ones(grid.n_elements, bool)
        for k in range(grid.p):
            inside &= (em[:, k] >= lo[k] * n) & (em[:, k] < hi[k] * n)
        touching = any(a == 0 or b == grid.L for a, b in zip(lo, hi))
        out.append(PeriodicNeighborhood(i, lo, hi, np.nonzero(inside)[0], touching))
    return out


@dataclass
class ComboConstants:
    N_c: int
    k_tilde_0: int
    colors: np.ndarray = field(repr=False, default=None)


def interaction_graph(part: Partition, A: Optional[CsrMatrix] = None) -> sp.csr_matrix:
    n = part.dofs.n_free
    rows = np.concatenate([np.full(len(s), i) for i, s in enumerate(part.dof_sets)])
    cols = np.concatenate(part.dof_sets)
    P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(part.N, n))
    if A is None:
        G = P @ P.T
    else:
        pattern = A.scipy.copy()
        pattern.data = np.ones_like(pattern.data)
        G = P @ (pattern + sp.identity(n, format="csr")) @ P.T
    G = sp.csr_matrix(G)
    G.setdiag(0)
    G.eliminate_zeros()
    return G


def greedy_coloring(G: sp.csr_matrix) -> np.ndarray:
    N = G.shape[0]
    colors = np.full(N, -1, dtype=np.int64)
    for i in range(N):
        nb = G.indices[G.indptr[i]:G.indptr[i + 1]]
        used = set(colors[nb][colors[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors


def combo_constants(part: Partition, neighborhoods: List[PeriodicNeighborhood],
                    A: Optional[CsrMatrix] = None) -> ComboConstants:
    """Greedy coloring count and neighborhood multiplicity of period cells.

    ``k_tilde_0`` is the largest number of periodic neighborhoods that share
    one period cell.
    """
    colors = greedy_coloring(interaction_graph(part, A))
    L = part.grid.L
    count = np.zeros(L ** part.grid.p, dtype=np.int64)
    for nb in neighborhoods:
        count[nb.cells(L)] += 1
    return ComboConstants(int(colors.max()) + 1, int(count.max()), colors)

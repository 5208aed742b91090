"""One- and two-level (restricted) additive Schwarz with the PerFact coarse space."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .decomposition import Partition, PartitionOfUnity, PeriodicNeighborhood
from .sparse_core import (CsrMatrix, FactorHandle, FactorizationError, RestrictionOp,
                          factor_solve, factorize, galerkin_product)

AS = "AS"
RAS = "RAS"
ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"


class PreconditionerError(RuntimeError):
    pass


@dataclass
class CoarsePerFact:
    R0_T: sp.csr_matrix = field(repr=False)
    included: List[int]
    A0: np.ndarray = field(repr=False)
    A0_factor: FactorHandle = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.included)

    def apply(self, r: np.ndarray) -> np.ndarray:
        """R0^T A0^{-1} R0 r."""
        if self.dim == 0:
            return np.zeros_like(r)
        return self.R0_T @ factor_solve(self.A0_factor, self.R0_T.T @ r)


def build_perfact_coarse(psi_global: np.ndarray, part: Partition, pu: PartitionOfUnity,
                         A_sigma: CsrMatrix, include_boundary: bool = True,
                         neighborhoods: Optional[Sequence[PeriodicNeighborhood]] = None
                         ) -> CoarsePerFact:
    """Coarse basis ``D_i R_i psi`` per subdomain.

    With ``include_boundary=False`` only subdomains whose periodic
    neighborhood avoids the x-boundary contribute (``neighborhoods`` needed).
    """
    n = A_sigma.nrows
    if include_boundary:
        included = list(range(part.N))
    else:
        if neighborhoods is None:
            raise ValueError("interior-only coarse space needs the periodic neighborhoods")
        included = [nb.subdomain for nb in neighborhoods if not nb.boundary_touching]
    rows, cols, vals = [], [], []
    for c, i in enumerate(included):
        s = pu.dof_sets[i]
        v = pu.weights[i] * psi_global[s]
        if not np.any(v != 0):
            raise PreconditionerError(f"coarse column of subdomain {i} vanishes")
        rows.append(s)
        cols.append(np.full(len(s), c))
        vals.append(v)
    m = len(included)
    if m:
        R0_T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, m))
        A0 = np.asarray((R0_T.T @ (A_sigma.scipy @ R0_T)).todense())
        A0 = 0.5 * (A0 + A0.T)
    else:
        R0_T = sp.csr_matrix((n, 0))
        A0 = np.zeros((0, 0))
    try:
        F = factorize(A0, reorder=False)
    except FactorizationError as exc:
        raise PreconditionerError(f"coarse matrix is not positive definite: {exc}") from exc
    return CoarsePerFact(R0_T, included, A0, F)


@dataclass
class SchwarzPreconditioner:
    variant: str
    levels: int
    restrictions: List[RestrictionOp] = field(repr=False)
    pu: PartitionOfUnity = field(repr=False)
    local_factors: List[FactorHandle] = field(repr=False)
    coarse: Optional[CoarsePerFact] = field(default=None, repr=False)
    threads: int = 1

    @property
    def n(self) -> int:
        return self.pu.n

    @property
    def factor_nnz(self) -> int:
        total = sum(F.nnz for F in self.local_factors)
        if self.coarse is not None:
            total += self.coarse.A0_factor.nnz
        return total

    def _local(self, i: int, r: np.ndarray) -> np.ndarray:
        y = factor_solve(self.local_factors[i], self.restrictions[i].apply(r))
        if self.variant == RAS:
            y = self.pu.weights[i] * y
        return y

    def apply_one_level(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros(self.n)
        N = len(self.local_factors)
        if self.threads > 1 and N > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                parts = list(ex.map(lambda i: self._local(i, r), range(N)))
        else:
            parts = (self._local(i, r) for i in range(N))
        # merged in subdomain order for reproducible sums
        for R, y in zip(self.restrictions, parts):
            out[R.indices] += y
        return out

    def apply_coarse(self, r: np.ndarray) -> np.ndarray:
        if self.coarse is None:
            return np.zeros(self.n)
        return self.coarse.apply(np.asarray(r, dtype=float))

    def apply(self, r: np.ndarray) -> np.ndarray:
        out = self.apply_one_level(r)
        if self.levels == 2:
            out += self.apply_coarse(r)
        return out

    __call__ = apply

    def matrix(self) -> np.ndarray:
        """Dense operator (small problems only)."""
        return np.column_stack([self.apply(e) for e in np.eye(self.n)])


def build_preconditioner(A_sigma: CsrMatrix, part: Partition, pu: PartitionOfUnity,
                         variant: str = AS, levels: int = 1,
                         coarse: Optional[CoarsePerFact] = None, threads: int = 1
                         ) -> SchwarzPreconditioner:
    if variant not in (AS, RAS):
        raise ValueError(f"unknown Schwarz variant {variant!r}")
    if levels not in (1, 2):
        raise ValueError("levels must be 1 or 2")
    if (levels == 2) != (coarse is not None):
        raise ValueError("a coarse space is required exactly for the two-level method")
    restrictions = part.restrictions()
    factors = []
    for R in restrictions:
        try:
            factors.append(factorize(galerkin_product(R, A_sigma)))
        except FactorizationError as exc:
            raise PreconditionerError(
                f"local matrix of subdomain {R.subdomain} is not positive definite "
                f"(shift too large?): {exc}") from exc
    return SchwarzPreconditioner(variant, levels, restrictions, pu, factors, coarse, threads)

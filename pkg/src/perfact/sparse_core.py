"""Sparse and small dense linear algebra kernels.

Everything else in the package works on :class:`CsrMatrix` objects and on
:class:`FactorHandle` factorizations produced here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

PIVOT_TOL = 1e-14
SYMMETRY_TOL = 1e-12


class FactorizationError(RuntimeError):
    """Raised when a symmetric factorization meets a non-positive pivot."""

    def __init__(self, message: str, pivot_index: int):
        super().__init__(message)
        self.pivot_index = pivot_index


class CsrMatrix:
    """Immutable compressed sparse row matrix.

    Column indices are sorted within each row and duplicates are summed on
    construction.  The ``symmetric`` flag is a promise checked on request
    (see :meth:`check_symmetric`), not on every construction.
    """

    __slots__ = ("_m", "symmetric")

    def __init__(self, mat, symmetric: bool = False):
        m = sp.csr_matrix(mat, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        m.indptr.setflags(write=False)
        m.indices.setflags(write=False)
        m.data.setflags(write=False)
        self._m = m
        self.symmetric = bool(symmetric)

    # -- construction helpers
    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric=False) -> "CsrMatrix":
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape), symmetric)

    @classmethod
    def from_dense(cls, a, symmetric=False) -> "CsrMatrix":
        return cls(sp.csr_matrix(np.asarray(a, dtype=float)), symmetric)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(sp.identity(n, format="csr"), True)

    # -- fields
    @property
    def nrows(self) -> int:
        return self._m.shape[0]

    @property
    def ncols(self) -> int:
        return self._m.shape[1]

    @property
    def shape(self):
        return self._m.shape

    @property
    def row_offsets(self) -> np.ndarray:
        return self._m.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._m.indices

    @property
    def values(self) -> np.ndarray:
        return self._m.data

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @property
    def scipy(self) -> sp.csr_matrix:
        """Underlying scipy matrix (read-only arrays)."""
        return self._m

    def toarray(self) -> np.ndarray:
        return self._m.toarray()

    def diagonal(self) -> np.ndarray:
        return self._m.diagonal()

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.nnz else 0.0

    def check_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        if self.nrows != self.ncols:
            return False
        diff = self._m - self._m.T
        if diff.nnz == 0:
            return True
        return float(np.max(np.abs(diff.data))) <= tol * max(self.max_abs(), 1e-300)

    def submatrix(self, idx) -> "CsrMatrix":
        """Principal submatrix on the index list ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        return CsrMatrix(self._m[idx][:, idx], self.symmetric)

    def matvec(self, x) -> np.ndarray:
        return spmv(self, x)

    def __matmul__(self, x):
        return spmv(self, x)

    def __call__(self, x):
        return spmv(self, x)

    def __repr__(self) -> str:
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, symmetric={self.symmetric})"


def spmv(A: CsrMatrix, x) -> np.ndarray:
    """Row-ordered sparse matrix-vector product."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.ncols:
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, vector has length {x.shape}")
    return A.scipy @ x


def shift_combine(A: CsrMatrix, B: CsrMatrix, sigma: float) -> CsrMatrix:
    """Return ``A - sigma * B`` on the union sparsity pattern."""
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return CsrMatrix(A.scipy - float(sigma) * B.scipy, A.symmetric and B.symmetric)


@dataclass(frozen=True)
class RestrictionOp:
    """Row selection (0/1 restriction) or a weighted sparse row set.

    For a selection, ``indices`` lists the global indices kept, in order.
    For a weighted operator, ``rows`` holds an ``m x n`` scipy matrix.
    """

    n: int
    indices: Optional[np.ndarray] = None
    rows: Optional[sp.csr_matrix] = None
    subdomain: int = -1

    @classmethod
    def select(cls, indices, n: int, subdomain: int = -1) -> "RestrictionOp":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("restriction index out of range")
        return cls(n=n, indices=idx, subdomain=subdomain)

    @classmethod
    def weighted(cls, rows, subdomain: int = -1) -> "RestrictionOp":
        r = sp.csr_matrix(rows, dtype=np.float64)
        return cls(n=r.shape[1], rows=r, subdomain=subdomain)

    @property
    def size(self) -> int:
        return len(self.indices) if self.indices is not None else self.rows.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.indices is not None:
            return x[self.indices]
        return self.rows @ x

    def extend(self, y: np.ndarray) -> np.ndarray:
        """Apply the transpose (prolongation)."""
        if self.indices is not None:
            out = np.zeros(self.n)
            out[self.indices] = y
            return out
        return self.rows.T @ y

    def as_matrix(self) -> sp.csr_matrix:
        if self.rows is not None:
            return self.rows
        m = len(self.indices)
        return sp.csr_matrix((np.ones(m), (np.arange(m), self.indices)), shape=(m, self.n))


def galerkin_product(R: RestrictionOp, A: CsrMatrix) -> CsrMatrix:
    """Return ``R A R^T``."""
    if R.n != A.nrows or A.nrows != A.ncols:
        raise ValueError(f"dimension mismatch: restriction acts on {R.n}, matrix is {A.shape}")
    if R.indices is not None:
        return A.submatrix(R.indices)
    Rm = R.rows
    prod = Rm @ (A.scipy @ Rm.T)
    out = CsrMatrix(prod, A.symmetric)
    if A.symmetric:
        # symmetrize roundoff so the flag remains truthful
        out = CsrMatrix(0.5 * (out.scipy + out.scipy.T), True)
    return out


@dataclass
class FactorHandle:
    """Banded Cholesky factor of a permuted SPD matrix.

    The factor is stored in LAPACK upper band form; ``pivots`` are the
    diagonal entries of ``D`` in the equivalent ``L D L^T`` form.
    """

    size: int
    permutation: np.ndarray
    bandwidth: int
    band: np.ndarray
    pivots: np.ndarray = field(repr=False)

    @property
    def nnz(self) -> int:
        """Stored entries of the triangular factor (band profile)."""
        n, kd = self.size, self.bandwidth
        return int(n * (kd + 1) - kd * (kd + 1) // 2)

    def solve(self, b) -> np.ndarray:
        return factor_solve(self, b)


def _rcm(m: sp.csr_matrix) -> np.ndarray:
    if m.shape[0] <= 2:
        return np.arange(m.shape[0])
    return np.asarray(reverse_cuthill_mckee(m, symmetric_mode=True), dtype=np.int64)


def factorize(M: Union[CsrMatrix, np.ndarray], reorder: bool = True) -> FactorHandle:
    """Symmetric positive definite factorization with a profile-reducing order.

    Raises :class:`FactorizationError` naming the (original) pivot index when
    a pivot falls below ``PIVOT_TOL * max_diag``.
    """
    if isinstance(M, np.ndarray):
        m = sp.csr_matrix(M)
    else:
        m = M.scipy
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("factorize needs a square matrix")
    if n == 0:
        return FactorHandle(0, np.zeros(0, dtype=np.int64), 0, np.zeros((1, 0)), np.zeros(0))
    perm = _rcm(m) if reorder else np.arange(n)
    pm = m[perm][:, perm].tocoo()
    upper = pm.row <= pm.col
    r, c, v = pm.row[upper], pm.col[upper], pm.data[upper]
    kd = int(np.max(c - r)) if r.size else 0
    ab = np.zeros((kd + 1, n))
    np.add.at(ab, (kd + r - c, c), v)
    diag = ab[kd].copy()
    max_diag = float(np.max(np.abs(diag))) if n else 0.0
    if max_diag == 0.0:
        raise FactorizationError("matrix has zero diagonal", int(perm[0]))
    fac, info = lapack.dpbtrf(ab, lower=0, overwrite_ab=1)
    if info < 0:
        raise ValueError(f"dpbtrf argument error {info}")
    if info > 0:
        j = int(perm[info - 1])
        raise FactorizationError(
            f"non-positive pivot at index {j}: matrix is not positive definite", j)
    piv = fac[kd] ** 2
    bad = np.nonzero(piv <= PIVOT_TOL * max_diag)[0]
    if bad.size:
        j = int(perm[bad[0]])
        raise FactorizationError(
            f"pivot {piv[bad[0]]:.3e} at index {j} below {PIVOT_TOL:g} * max diagonal", j)
    return FactorHandle(n, perm, kd, fac, piv)


def factor_solve(F: FactorHandle, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != F.size:
        raise ValueError(f"dimension mismatch: factor size {F.size}, rhs {b.shape}")
    if F.size == 0:
        return b.copy()
    x, info = lapack.dpbtrs(F.band, b[F.permutation], lower=0)
    if info != 0:
        raise ValueError(f"dpbtrs failed with info={info}")
    out = np.empty_like(x)
    out[F.permutation] = x
    return out


def dense_gevp(A, B, max_size: int = 5000):
    """Eigenpairs of the symmetric-definite pencil (A, B), ascending.

    Eigenvectors are B-orthonormal.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError("dense_gevp needs square matrices of equal size")
    if n > max_size:
        raise ValueError(f"dense_gevp limited to size {max_size}, got {n}")
    Bs = 0.5 * (B + B.T)
    scale = float(np.max(np.abs(np.diag(Bs)))) if n else 1.0
    if n and (scale <= 0 or scipy.linalg.eigvalsh(Bs)[0] <= 1e-12 * scale):
        raise np.linalg.LinAlgError("B is not symmetric positive definite")
    w, V = scipy.linalg.eigh(0.5 * (A + A.T), Bs)
    return w, V


@dataclass
class ConditionEstimate:
    lambda_min: float
    lambda_max: float
    kappa: float
    steps: int
    breakdown: bool


def _as_callable(op) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda x: x.copy()
    if isinstance(op, np.ndarray):
        return lambda x: op @ x
    if callable(op):
        return op
    return lambda x: op @ x


def lanczos_from_cg(alphas: Sequence[float], betas: Sequence[float]):
    """Extreme eigenvalues of the Lanczos tridiagonal built from PCG coefficients."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    m = a.size
    if m == 0:
        raise ValueError("no CG steps available")
    d = np.empty(m)
    d[0] = 1.0 / a[0]
    if m > 1:
        d[1:] = 1.0 / a[1:] + b[: m - 1] / a[: m - 1]
    e = np.sqrt(b[: m - 1]) / a[: m - 1]
    if m == 1:
        return d[0], d[0]
    w = scipy.linalg.eigh_tridiagonal(d, e, eigvals_only=True)
    return float(w[0]), float(w[-1])


def cg_condition_estimate(opA, opM, b, k: int, tol: float = 1e-14) -> ConditionEstimate:
    """Estimate the spectrum of ``M^{-1} A`` from ``k`` PCG steps (x0 = 0).

    The returned ratio is a lower bound on the true condition number.
    """
    A = _as_callable(opA)
    M = _as_callable(opM)
    r = np.array(b, dtype=float)
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    r0 = float(np.linalg.norm(r))
    alphas, betas = [], []
    breakdown = False
    for _ in range(k):
        Ap = A(p)
        pAp = float(p @ Ap)
        if pAp <= 0 or rz <= 0:
            breakdown = True
            break
        alpha = rz / pAp
        alphas.append(alpha)
        r = r - alpha * Ap
        z = M(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        if np.linalg.norm(r) <= tol * r0 or rz_new <= 0:
            breakdown = True
            break
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    if not alphas:
        return ConditionEstimate(np.nan, np.nan, np.nan, 0, True)
    lo, hi = lanczos_from_cg(alphas, betas)
    return ConditionEstimate(lo, hi, hi / lo, len(alphas), breakdown)


def write_matrix_market(A: CsrMatrix, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), A.scipy, comment=comment,
                     symmetry="symmetric" if A.symmetric else "general")


def read_matrix_market(path, symmetric: Optional[bool] = None) -> CsrMatrix:
    m = scipy.io.mmread(str(path))
    out = CsrMatrix(sp.csr_matrix(m))
    if symmetric is None:
        symmetric = out.check_symmetric()
    out.symmetric = symmetric
    return out

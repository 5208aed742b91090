"""Outer eigensolvers: shifted inverse power method and inexact SI-LOPCG."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import krylov
from .precond import SchwarzPreconditioner
from .sparse_core import CsrMatrix, FactorHandle, dense_gevp, factor_solve, shift_combine

FIXED = "fixed"
ADAPTIVE = "adaptive"
FUSED = "fused"

DIRECT = "direct"
CG = "cg"
GMRES = "gmres"
STATIONARY = "stationary"


class EigenSolveError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def rayleigh_quotient(A, B, x) -> float:
    x = np.asarray(x, dtype=float)
    xBx = float(x @ (B @ x))
    if not xBx > 0:
        raise ValueError("x^T B x must be positive")
    return float(x @ (A @ x)) / xBx


def spectral_residual(A, B, x) -> np.ndarray:
    rho = rayleigh_quotient(A, B, x)
    return A @ x - rho * (B @ x)


def b_normalize(B, x) -> np.ndarray:
    return x / np.sqrt(float(x @ (B @ x)))


@dataclass
class InnerSolver:
    """How ``A_sigma w = r`` is (approximately) solved in each outer step.

    ``kind`` is one of direct, cg, gmres, stationary; ``strategy`` one of
    fixed, adaptive, fused.  The fused strategy applies ``precond`` once.
    """

    kind: str = CG
    precond: Optional[SchwarzPreconditioner] = None
    factor: Optional[FactorHandle] = None
    strategy: str = FIXED
    rtol: float = 1e-8
    kmax: int = krylov.KMAX_DEFAULT
    coarse_mode: str = "multiplicative"

    def tolerance(self, outer_residual: float) -> float:
        if self.strategy == ADAPTIVE:
            return min(0.1, outer_residual)
        return self.rtol

    def solve(self, A_sigma: CsrMatrix, r: np.ndarray, outer_residual: float = 1.0):
        """Return (w, inner iteration count, converged flag)."""
        if self.strategy == FUSED:
            if self.precond is None:
                raise ValueError("fused strategy needs a preconditioner")
            return self.precond.apply(r), 1, True
        if self.kind == DIRECT:
            return factor_solve(self.factor, r), 1, True
        tol = self.tolerance(outer_residual)
        if self.kind == CG:
            w, rep = krylov.pcg(A_sigma, self.precond, r, None, tol, self.kmax)
        elif self.kind == GMRES:
            w, rep = krylov.gmres(A_sigma, self.precond, r, None, tol, self.kmax)
        elif self.kind == STATIONARY:
            mode = self.coarse_mode if self.precond.levels == 2 else "none"
            w, rep = krylov.stationary(A_sigma, self.precond, r, None, tol, self.kmax, mode)
        else:
            raise ValueError(f"unknown inner solver {self.kind!r}")
        if rep.stop_reason in (krylov.DIVERGENCE,) or (rep.stop_reason == krylov.BREAKDOWN
                                                        and self.kind == CG):
            raise EigenSolveError(f"inner {self.kind} solve failed: {rep.stop_reason}", rep)
        return w, rep.iterations, rep.converged


@dataclass
class EigenSolveReport:
    eigenvalue: float
    eigenvector: np.ndarray = field(repr=False)
    outer_iterations: int
    inner_iterations_per_outer: List[int]
    spectral_residual_history: List[float]
    eigenvalue_history: List[float]
    sigma: float
    converged: bool

    @property
    def max_inner(self) -> int:
        return max(self.inner_iterations_per_outer, default=0)

    @property
    def sum_inner(self) -> int:
        return int(sum(self.inner_iterations_per_outer))

    @property
    def gap_to_sigma(self) -> float:
        return self.eigenvalue - self.sigma


def shifted_ipm(A: CsrMatrix, B: CsrMatrix, sigma: float, inner: InnerSolver,
                tol_o: float = 1e-8, kmax: int = 1000, x0=None) -> EigenSolveReport:
    """x_{k+1} = normalize_B(A_sigma^{-1} B x_k) until the spectral residual <= tol_o."""
    A_s = shift_combine(A, B, sigma)
    x = np.ones(A.nrows) if x0 is None else np.array(x0, dtype=float)
    x = b_normalize(B, x)
    res = spectral_residual(A, B, x)
    rn = float(np.linalg.norm(res))
    hist, lam_hist, inner_its = [rn], [rayleigh_quotient(A, B, x)], []
    k = 0
    while rn > tol_o and k < kmax:
        w, its, _ = inner.solve(A_s, B @ x, rn)
        inner_its.append(its)
        x = b_normalize(B, w)
        k += 1
        res = spectral_residual(A, B, x)
        rn = float(np.linalg.norm(res))
        hist.append(rn)
        lam_hist.append(rayleigh_quotient(A, B, x))
    return EigenSolveReport(lam_hist[-1], x, k, inner_its, hist, lam_hist, sigma, rn <= tol_o)


def _b_orthonormal_basis(B: CsrMatrix, vectors, drop_tol: float = 1e-12) -> np.ndarray:
    """Modified Gram-Schmidt (two passes) in the B-inner product."""
    basis, bbasis = [], []
    for v in vectors:
        v = np.array(v, dtype=float)
        nrm0 = np.sqrt(max(float(v @ (B @ v)), 0.0))
        if nrm0 == 0.0:
            continue
        for _ in range(2):
            for q, bq in zip(basis, bbasis):
                v -= float(bq @ v) * q
        bv = B @ v
        nrm = np.sqrt(max(float(v @ bv), 0.0))
        if nrm < drop_tol * nrm0:
            continue
        basis.append(v / nrm)
        bbasis.append(bv / nrm)
    return np.column_stack(basis)


def si_lopcg(A: CsrMatrix, B: CsrMatrix, sigma: float, inner: InnerSolver,
             tol_o: float = 1e-8, kmax: int = 1000, x0=None, x1=None) -> EigenSolveReport:
    """Inexact shift-and-invert preconditioned LOPCG for the smallest eigenpair.

    Each step solves ``A_sigma w = r`` per the inner strategy and minimises
    the Rayleigh quotient over span{x_k, w_k, x_{k-1}}.  The outer test is
    absolute on the spectral residual of the B-normalized iterate.
    """
    n = A.nrows
    A_s = shift_combine(A, B, sigma)
    if x0 is None:
        x0 = np.zeros(n)
        x0[0] = 1.0
    if x1 is None:
        x1 = np.ones(n)
    x_prev = b_normalize(B, np.array(x0, dtype=float))
    x = b_normalize(B, np.array(x1, dtype=float))
    lam = rayleigh_quotient(A, B, x)
    r = A @ x - lam * (B @ x)
    rn = float(np.linalg.norm(r))
    hist, lam_hist, inner_its = [rn], [lam], []
    k = 0
    while rn > tol_o and k < kmax:
        w, its, _ = inner.solve(A_s, r, rn)
        inner_its.append(its)
        Q = _b_orthonormal_basis(B, [x, w, x_prev])
        AQ = np.column_stack([A @ Q[:, j] for j in range(Q.shape[1])])
        BQ = np.column_stack([B @ Q[:, j] for j in range(Q.shape[1])])
        _, C = dense_gevp(Q.T @ AQ, Q.T @ BQ)
        c = C[:, 0]
        x_new = Q @ c
        if float(x_new @ (B @ x)) < 0:
            x_new = -x_new
        x_prev, x = x, b_normalize(B, x_new)
        k += 1
        lam = rayleigh_quotient(A, B, x)
        r = A @ x - lam * (B @ x)
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        lam_hist.append(lam)
    return EigenSolveReport(lam, x, k, inner_its, hist, lam_hist, sigma, rn <= tol_o)


def write_eigen_csv(report: EigenSolveReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer_iteration", "spectral_residual", "inner_iterations", "eigenvalue_estimate"])
        for k, (res, lam) in enumerate(zip(report.spectral_residual_history, report.eigenvalue_history)):
            its = report.inner_iterations_per_outer[k - 1] if k > 0 else 0
            w.writerow([k, format(res, ".17g"), its, format(lam, ".17g")])

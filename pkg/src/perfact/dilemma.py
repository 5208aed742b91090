"""Closed-form iteration model for the shifted 2D finite-difference Laplacian.

The grid has spacing ``h`` on (0, L) x (0, 1) with zero boundary values, so
``n = 1/h - 1`` interior points per unit length.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class DilemmaSpectrum:
    h: float
    L: float
    lambda1: float
    lambda2: float
    lambda_max: float
    sigma_inf: float


@dataclass(frozen=True)
class IterationEstimate:
    R: float
    Q: float
    rho_ipm: float
    rho_cg: float
    kappa: float
    n_ipm: float
    n_cg: float
    n_tot: float


def fd_eigenvalue(h: float, L: float, i: int, j: int) -> float:
    s1 = math.sin(math.pi * h * i / (2.0 * L))
    s2 = math.sin(math.pi * h * j / 2.0)
    return 4.0 / h ** 2 * (s1 * s1 + s2 * s2)


def fd_spectrum(h: float, L: float) -> DilemmaSpectrum:
    if not 0 < h < 1:
        raise ValueError(f"mesh size must lie in (0, 1), got {h}")
    c1 = math.cos(math.pi * h / (2.0 * L))
    c2 = math.cos(math.pi * h / 2.0)
    lam_max = 4.0 / h ** 2 * (c1 * c1 + c2 * c2)
    sigma_inf = 4.0 / h ** 2 * math.sin(math.pi * h / 2.0) ** 2
    return DilemmaSpectrum(h, L, fd_eigenvalue(h, L, 1, 1), fd_eigenvalue(h, L, 2, 1),
                           lam_max, sigma_inf)


def iteration_estimates(spec: DilemmaSpectrum, sigma: float, R: float, Q: float) -> IterationEstimate:
    if sigma >= spec.lambda1:
        raise ValueError(f"shift {sigma} overshoots the smallest eigenvalue {spec.lambda1}")
    if sigma < 0:
        raise ValueError("shift must be nonnegative")
    rho_ipm = (spec.lambda1 - sigma) / (spec.lambda2 - sigma)
    kappa = (spec.lambda_max - sigma) / (spec.lambda1 - sigma)
    sk = math.sqrt(kappa)
    rho_cg = (sk - 1.0) / (sk + 1.0)
    n_ipm = -math.log(R) / math.log(rho_ipm)
    n_cg = -math.log(2.0 * sk * Q) / math.log(rho_cg) if rho_cg > 0 else 1.0
    return IterationEstimate(R, Q, rho_ipm, rho_cg, kappa, n_ipm, n_cg, n_ipm * n_cg)


def sigma_grid(h: float, size: int) -> np.ndarray:
    """Uniform grid on [h^2, sigma_inf - h^2]."""
    if size < 10:
        raise ValueError("sigma grid needs at least 10 points")
    s_inf = fd_spectrum(h, 2.0).sigma_inf
    return np.linspace(h * h, s_inf - h * h, size)


def sigma_sweep(h: float = 0.1, L_list: Sequence[int] = (4, 5, 6, 7), R: float = math.e ** 7,
                Q: float = math.e ** 4, sigma_grid_size: int = 200) -> List[tuple]:
    """Rows (sigma, L, n_ipm, n_cg, n_tot) over the shift grid."""
    rows = []
    for L in L_list:
        spec = fd_spectrum(h, L)
        for s in sigma_grid(h, sigma_grid_size):
            est = iteration_estimates(spec, float(s), R, Q)
            rows.append((float(s), int(L), est.n_ipm, est.n_cg, est.n_tot))
    return rows


def write_sweep_csv(rows: Iterable[tuple], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", "L", "n_ipm", "n_cg", "n_tot"])
        for s, L, a, b, c in rows:
            w.writerow([format(s, ".17g"), L, format(a, ".17g"), format(b, ".17g"), format(c, ".17g")])


def fd_laplacian(h: float, L: int) -> sp.csr_matrix:
    """5-point Dirichlet Laplacian on (0, L) x (0, 1), x index fastest."""
    n = int(round(1.0 / h))
    nx, ny = L * n - 1, n - 1

    def lap1d(m):
        return sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h ** 2

    A = sp.kron(sp.identity(ny), lap1d(nx)) + sp.kron(lap1d(ny), sp.identity(nx))
    return sp.csr_matrix(A)

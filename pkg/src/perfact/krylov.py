"""Preconditioned CG, left-preconditioned GMRES and stationary Schwarz sweeps."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .precond import SchwarzPreconditioner

TOLERANCE = "tolerance"
MAX_ITERATIONS = "max-iterations"
BREAKDOWN = "breakdown"
DIVERGENCE = "divergence"

KMAX_DEFAULT = 10000


@dataclass
class SolveReport:
    iterations: int
    residual_history: List[float]
    converged: bool
    stop_reason: str
    residual_kind: str = "unpreconditioned"
    alphas: List[float] = field(default_factory=list, repr=False)
    betas: List[float] = field(default_factory=list, repr=False)
    true_residual: float = float("nan")


def _op(A) -> Callable[[np.ndarray], np.ndarray]:
    if A is None:
        return lambda x: np.array(x, dtype=float, copy=True)
    if isinstance(A, np.ndarray):
        return lambda x: A @ x
    if callable(A):
        return A
    return lambda x: A @ x


def pcg(A, M_inv, b, x0=None, rtol: float = 1e-8, kmax: int = KMAX_DEFAULT, atol: float = 0.0):
    """Preconditioned conjugate gradients.

    Stops once ``||r_k|| <= max(rtol * ||r_0||, atol)`` on the recurrence
    residual; the true residual is reported at the end.
    """
    Aop, Mop = _op(A), _op(M_inv)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - Aop(x)
    rn = float(np.linalg.norm(r))
    hist = [rn]
    target = max(rtol * rn, atol)
    alphas, betas = [], []
    if rn <= target or rn == 0.0:
        return x, SolveReport(0, hist, True, TOLERANCE, true_residual=rn)
    z = Mop(r)
    p = z.copy()
    rz = float(r @ z)
    reason, k = MAX_ITERATIONS, 0
    for k in range(1, kmax + 1):
        Ap = Aop(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0 or rz <= 0.0:
            reason = BREAKDOWN
            k -= 1
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        alphas.append(alpha)
        if rn <= target:
            reason = TOLERANCE
            break
        z = Mop(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    true_res = float(np.linalg.norm(b - Aop(x)))
    rep = SolveReport(k, hist, reason == TOLERANCE, reason, alphas=alphas, betas=betas,
                      true_residual=true_res)
    return x, rep


def gmres(A, M_inv, b, x0=None, rtol: float = 1e-8, kmax: int = KMAX_DEFAULT,
          reorth_tol: float = 1e-8):
    """Left-preconditioned GMRES without restart.

    The history holds preconditioned residual norms ``||M^{-1}(b - A x_k)||``.
    """
    Aop, Mop = _op(A), _op(M_inv)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    z = Mop(b - Aop(x))
    beta = float(np.linalg.norm(z))
    hist = [beta]
    if beta == 0.0:
        return x, SolveReport(0, hist, True, TOLERANCE, "preconditioned",
                              true_residual=float(np.linalg.norm(b - Aop(x))))
    target = rtol * beta
    V = [z / beta]
    H = np.zeros((min(kmax, 64) + 1, min(kmax, 64)))
    cs, sn = [], []
    g = [beta]
    reason, k = MAX_ITERATIONS, 0
    for j in range(kmax):
        if j + 1 >= H.shape[0]:
            grow = np.zeros((2 * H.shape[0], 2 * H.shape[1]))
            grow[: H.shape[0], : H.shape[1]] = H
            H = grow
        w = Mop(Aop(V[j]))
        for i in range(j + 1):
            H[i, j] = float(V[i] @ w)
            w -= H[i, j] * V[i]
        wn = float(np.linalg.norm(w))
        if wn > 0.0:
            Vm = np.asarray(V)
            c = Vm @ (w / wn)
            if np.max(np.abs(c)) > reorth_tol:
                for i in range(j + 1):
                    t = float(V[i] @ w)
                    H[i, j] += t
                    w -= t * V[i]
                wn = float(np.linalg.norm(w))
        H[j + 1, j] = wn
        for i in range(j):
            h0, h1 = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * h0 + sn[i] * h1
            H[i + 1, j] = -sn[i] * h0 + cs[i] * h1
        h0, h1 = H[j, j], H[j + 1, j]
        den = float(np.hypot(h0, h1))
        c_, s_ = (1.0, 0.0) if den == 0.0 else (h0 / den, h1 / den)
        cs.append(c_)
        sn.append(s_)
        H[j, j] = den
        H[j + 1, j] = 0.0
        g.append(-s_ * g[j])
        g[j] = c_ * g[j]
        k = j + 1
        hist.append(abs(g[j + 1]))
        if abs(g[j + 1]) <= target:
            reason = TOLERANCE
            break
        if wn <= 1e-14 * beta:
            reason = BREAKDOWN
            break
        V.append(w / wn)
    y = np.linalg.solve(np.triu(H[:k, :k]), np.asarray(g[:k]))
    for i in range(k):
        x += y[i] * V[i]
    true_res = float(np.linalg.norm(b - Aop(x)))
    converged = reason in (TOLERANCE, BREAKDOWN)
    return x, SolveReport(k, hist, converged, reason, "preconditioned", true_residual=true_res)


def stationary(A, precond: SchwarzPreconditioner, b, x0=None, tol: float = 1e-8,
               kmax: int = KMAX_DEFAULT, coarse_mode: str = "none"):
    """Stationary one-level RAS sweep, optionally followed by a coarse step.

    Converges when ``||b - A x_k|| <= tol * ||b||``.
    """
    if coarse_mode not in ("none", "multiplicative"):
        raise ValueError(f"unknown coarse mode {coarse_mode!r}")
    if coarse_mode == "multiplicative" and precond.coarse is None:
        raise ValueError("multiplicative coarse step needs a coarse space")
    Aop = _op(A)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - Aop(x)
    rn = float(np.linalg.norm(r))
    hist = [rn]
    target = tol * float(np.linalg.norm(b))
    if rn <= target:
        return x, SolveReport(0, hist, True, TOLERANCE, true_residual=rn)
    reason, k = MAX_ITERATIONS, 0
    for k in range(1, kmax + 1):
        x = x + precond.apply_one_level(r)
        r = b - Aop(x)
        if coarse_mode == "multiplicative":
            x = x + precond.apply_coarse(r)
            r = b - Aop(x)
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        if rn <= target:
            reason = TOLERANCE
            break
        if not np.isfinite(rn) or rn > 1e6 * hist[0]:
            reason = DIVERGENCE
            break
    return x, SolveReport(k, hist, reason == TOLERANCE, reason, true_residual=rn)


def write_residual_csv(report: SolveReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual_norm"])
        for i, v in enumerate(report.residual_history):
            w.writerow([i, format(float(v), ".17g")])

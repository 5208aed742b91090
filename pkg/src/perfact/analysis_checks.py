"""Numerical verification of the two-level Schwarz theory on small problems.

Local generalized eigenproblems live on the period-aligned neighborhoods of
each overlapping subdomain; the right-hand form is the shift-free energy of
``chi_i u`` so it is only semidefinite.  Nodes where ``chi_i`` vanishes are
eliminated by a Schur complement and reported as infinite eigenvalues.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from . import decomposition as dec
from .cell_solver import CellSolution
from .grid_fem import (DIRICHLET, DofMap, PotentialSpec, TensorGrid, assemble, box_dof_map,
                       build_dof_map, potential_at_quadrature)
from .output import write_json
from .pipeline import Setup, build_precond, build_setup
from .sparse_core import CsrMatrix, cg_condition_estimate

NEUMANN = "neumann"
PERIODIC = "periodic"

DENSE_KAPPA_LIMIT = 800
GEVP_LIMIT = 5000
RECONSTRUCTION_TOL = 1e-11


class AnalysisError(RuntimeError):
    pass


# ---------------------------------------------------------------- local forms

@dataclass
class NeighborhoodForm:
    which: str
    local_dofs: np.ndarray  # global free-DOF ids, ascending
    A_sigma: np.ndarray = field(repr=False)
    A_zero: np.ndarray = field(repr=False)

    @property
    def scale(self) -> float:
        """Max absolute row sum of the shifted local matrix."""
        return float(np.max(np.sum(np.abs(self.A_sigma), axis=1)))


def neighborhood_form(grid: TensorGrid, V: PotentialSpec, sigma: float,
                      nb: dec.PeriodicNeighborhood, dofs: DofMap, which: str = NEUMANN,
                      floor: Optional[float] = None) -> NeighborhoodForm:
    """Dense local forms on one periodic neighborhood.

    ``floor`` is min(0, min V); the shift-free form uses ``V - floor``.
    """
    if which == NEUMANN:
        local_map = dofs
    elif which == PERIODIC:
        lo, hi = nb.node_bounds(grid)
        local_map = box_dof_map(grid, dofs, lo, hi, periodic=True)
    else:
        raise ValueError(f"unknown neighborhood form {which!r}")
    if floor is None:
        floor = min(0.0, float(np.min(potential_at_quadrature(grid, V))))
    ops = assemble(grid, V, local_map, elements=nb.elements)
    conn = local_map.node_to_dof[grid.element_nodes(nb.elements)].ravel()
    loc = np.unique(conn[conn >= 0])
    if len(loc) > GEVP_LIMIT:
        raise AnalysisError(f"neighborhood {nb.subdomain} has {len(loc)} DOFs, too many for a dense solve")

    def sub(M: CsrMatrix) -> np.ndarray:
        return M.scipy[loc][:, loc].toarray()

    K, P, M = sub(ops.A_stiff), sub(ops.A_pot), sub(ops.B_mass)
    return NeighborhoodForm(which, loc, K + P - sigma * M, K + P - floor * M)


@dataclass
class LocalEigenpairs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)  # columns on form.local_dofs
    n_infinite: int
    form: NeighborhoodForm = field(repr=False)


def local_gevp(form: NeighborhoodForm, chi: np.ndarray, k: int = 2) -> LocalEigenpairs:
    """Smallest ``k`` finite eigenpairs of (A_sigma, X A_zero X), X = diag(chi)."""
    c = np.asarray(chi, dtype=float)[form.local_dofs]
    R = np.nonzero(c != 0)[0]
    Kn = np.nonzero(c == 0)[0]
    if len(R) == 0:
        raise AnalysisError("partition-of-unity function vanishes on the neighborhood")
    A = form.A_sigma
    Bt = c[:, None] * form.A_zero * c[None, :]
    B_RR = Bt[np.ix_(R, R)]
    if len(Kn):
        A_KK = A[np.ix_(Kn, Kn)]
        A_KR = A[np.ix_(Kn, R)]
        try:
            lu = sla.lu_factor(A_KK, check_finite=False)
        except (ValueError, sla.LinAlgError) as exc:
            raise AnalysisError(f"pencil is defective beyond its kernel: {exc}") from exc
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.abs(A_KK).max():
            raise AnalysisError("pencil is defective beyond its kernel")
        X = sla.lu_solve(lu, A_KR)
        S = A[np.ix_(R, R)] - A_KR.T @ X
        S = 0.5 * (S + S.T)
    else:
        S, X = A, None
    try:
        lam, U_R = sla.eigh(S, B_RR)
    except sla.LinAlgError as exc:
        raise AnalysisError(f"weighted form is not definite on the support of chi: {exc}") from exc
    k = min(k, len(lam))
    lam, U_R = lam[:k], U_R[:, :k]
    U = np.zeros((len(c), k))
    U[R] = U_R
    if X is not None:
        U[Kn] = -X @ U_R
    return LocalEigenpairs(lam, U, len(Kn), form)


def neighborhood_gevp(grid: TensorGrid, V: PotentialSpec, sigma: float,
                      neighborhood: dec.PeriodicNeighborhood, chi_i: np.ndarray,
                      which: str = NEUMANN, k: int = 2, dofs: Optional[DofMap] = None,
                      floor: Optional[float] = None) -> LocalEigenpairs:
    """Neumann (free x-faces) or periodic (identified x-faces) local eigenproblem.

    ``chi_i`` is a vector on the global free DOFs of ``dofs``.
    """
    if dofs is None:
        dofs = build_dof_map(grid, DIRICHLET)
    form = neighborhood_form(grid, V, sigma, neighborhood, dofs, which, floor)
    return local_gevp(form, chi_i, k)


def angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between the lines spanned by u and v, accurate near zero."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return float("nan")
    uh, vh = u / nu, v / nv
    if uh @ vh < 0:
        vh = -vh
    return float(2.0 * np.arcsin(min(1.0, 0.5 * np.linalg.norm(uh - vh))))


def psi_symmetry_defect(cell: CellSolution) -> float:
    """max |psi(z) - psi(reflected z)| over cell nodes, reflection about the cell centre in x."""
    g, d = cell.grid, cell.dofs
    vals = np.where(d.node_to_dof >= 0, cell.psi_cell[np.maximum(d.node_to_dof, 0)], 0.0)
    arr = vals.reshape(g.node_shape, order="F")
    return float(np.max(np.abs(arr - np.flip(arr, axis=tuple(range(g.p))))))


# ---------------------------------------------------------------- splitting checks

def _energy(M, v) -> float:
    return float(v @ (M @ v))


def spsd_splitting_check(A_sigma: CsrMatrix, forms: Sequence[NeighborhoodForm],
                         samples: int = 100, rng=None) -> float:
    """max over random v of sum_i |r_i v|^2_{local} / |v|^2_{A_sigma}."""
    rng = np.random.default_rng(42) if rng is None else rng
    worst = 0.0
    for _ in range(samples):
        v = rng.standard_normal(A_sigma.nrows)
        worst = max(worst, splitting_ratio(A_sigma, forms, v))
    return worst


def splitting_ratio(A_sigma: CsrMatrix, forms: Sequence[NeighborhoodForm], v: np.ndarray) -> float:
    den = _energy(A_sigma, v)
    num = sum(_energy(f.A_sigma, v[f.local_dofs]) for f in forms)
    if den == 0.0 and num == 0.0:
        return 0.0
    return num / den


def triangle_check(A_sigma: CsrMatrix, part: dec.Partition, N_c: int,
                   samples: int = 100, rng=None) -> float:
    """max over random local v_i of |sum v_i|^2 / (N_c sum |v_i|^2), energy norm."""
    rng = np.random.default_rng(42) if rng is None else rng
    n = A_sigma.nrows
    worst = 0.0
    for _ in range(samples):
        total = np.zeros(n)
        parts = 0.0
        for s in part.dof_sets:
            vi = np.zeros(n)
            vi[s] = rng.standard_normal(len(s))
            total += vi
            parts += _energy(A_sigma, vi)
        worst = max(worst, _energy(A_sigma, total) / (N_c * parts))
    return worst


@dataclass
class SplitResult:
    lhs: float
    rhs: float
    C0: float
    reconstruction_error: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def stable_split_check(v: np.ndarray, setup: Setup, forms: Dict[int, NeighborhoodForm],
                       C0: float) -> SplitResult:
    """Split v into a coarse part built from interior-neighborhood projections and local parts.

    ``forms`` maps subdomain index to its Neumann neighborhood form.
    """
    A = setup.A_sigma
    n = A.nrows
    v = np.asarray(v, dtype=float)
    v0 = np.zeros(n)
    locals_ = []
    for nb in setup.neighborhoods:
        i = nb.subdomain
        chi = setup.pu.chi(i)
        vi = chi * v
        if not nb.boundary_touching:
            f = forms[i]
            c = chi[f.local_dofs]
            Bt = c[:, None] * f.A_zero * c[None, :]
            p = setup.psi[f.local_dofs]
            coef = float(v[f.local_dofs] @ (Bt @ p)) / float(p @ (Bt @ p))
            proj = np.zeros(n)
            proj[f.local_dofs] = coef * p
            v0 += chi * proj
            vi -= chi * proj
        locals_.append(vi)
    rec = float(np.linalg.norm(v0 + np.sum(locals_, axis=0) - v))
    scale = max(1.0, float(np.linalg.norm(v)))
    if rec > RECONSTRUCTION_TOL * scale:
        raise AnalysisError(f"split does not reproduce v (error {rec:.3e})")
    lhs = _energy(A, v0) + sum(_energy(A, vi) for vi in locals_)
    return SplitResult(lhs, C0 * _energy(A, v), C0, rec)


# ---------------------------------------------------------------- condition bound

def bound_constants(lambda1: Sequence[float], lambda2: Sequence[float],
                    interior: Sequence[bool], k_tilde_0: int, N_c: int):
    """(C1, C0, bound); C1 is infinite when a referenced eigenvalue is not positive."""
    ref = [l2 if inn else l1 for l1, l2, inn in zip(lambda1, lambda2, interior)]
    m = min(ref)
    C1 = 1.0 / m if m > 0 else float("inf")
    C0 = 2.0 + C1 * k_tilde_0 * (2 * N_c + 1)
    return C1, C0, C0 * C0 * (N_c + 1)


def measure_kappa(A_sigma: CsrMatrix, precond, dense_limit: int = DENSE_KAPPA_LIMIT,
                  lanczos_steps: int = 400, seed: int = 42):
    """(kappa, method).  Dense: eigenvalues of L^T M^{-1} L with A_sigma = L L^T."""
    n = A_sigma.nrows
    if n <= dense_limit:
        A = A_sigma.toarray()
        Lc = np.linalg.cholesky(A)
        Minv = precond.matrix()
        Minv = 0.5 * (Minv + Minv.T)
        ev = np.linalg.eigvalsh(Lc.T @ Minv @ Lc)
        return float(ev[-1] / ev[0]), "dense"
    b = np.random.default_rng(seed).standard_normal(n)
    est = cg_condition_estimate(A_sigma, precond, b, min(n, lanczos_steps))
    return float(est.kappa), "lanczos"


@dataclass
class AnalysisConfig:
    p: int = 1
    q: int = 1
    L: int = 2
    ell: float = 1.0
    n_per_unit: int = 4
    potential: PotentialSpec = field(default=None)
    partition: str = dec.UNIT_CELLS
    N: Optional[int] = None
    delta: int = 1
    pu: str = dec.DISTANCE
    include_boundary: bool = True
    samples: int = 100
    split_samples: int = 50
    seed: int = 42
    dense_limit: int = DENSE_KAPPA_LIMIT
    lanczos_steps: int = 400


@dataclass
class AnalysisReport:
    L: int
    sigma: float
    n_dofs: int
    N: int
    N_c: int
    k_tilde_0: int
    lambda1: List[float]
    lambda2: List[float]
    interior: List[bool]
    C1: float
    C0: float
    bound: float
    measured_kappa: float
    kappa_method: str
    kappa_one_level: float
    spsd_max_ratio: float
    triangle_max_ratio: float
    split_max_ratio: float
    ground_state: List[dict]
    notes: List[str]

    @property
    def bound_holds(self) -> bool:
        return self.measured_kappa <= self.bound

    @property
    def spsd_holds(self) -> bool:
        return self.spsd_max_ratio <= self.k_tilde_0 * (1 + 1e-10)

    @property
    def triangle_holds(self) -> bool:
        return self.triangle_max_ratio <= 1 + 1e-10

    @property
    def split_holds(self) -> bool:
        return self.split_max_ratio <= 1 + 1e-10

    def checks(self) -> Dict[str, bool]:
        return {"condition_bound": self.bound_holds, "spsd_splitting": self.spsd_holds,
                "strengthened_triangle": self.triangle_holds, "stable_split": self.split_holds}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = self.checks()
        return d

    def write_json(self, path) -> None:
        write_json(self.to_dict(), path)


def ground_state_check(setup: Setup, nb: dec.PeriodicNeighborhood) -> dict:
    """Compare Neumann and periodic ground states with the restricted periodic solution."""
    floor = setup.potential_floor
    chi = setup.pu.chi(nb.subdomain)
    res = {"subdomain": nb.subdomain}
    for which in (NEUMANN, PERIODIC):
        ep = neighborhood_gevp(setup.grid, setup.V, setup.sigma, nb, chi, which, 1,
                               setup.dofs, floor)
        f = ep.form
        res[which] = {"lambda1": float(ep.eigenvalues[0]), "scale": f.scale,
                      "angle": angle(ep.eigenvectors[:, 0], setup.psi[f.local_dofs])}
    res["lambda_gap"] = abs(res[NEUMANN]["lambda1"] - res[PERIODIC]["lambda1"])
    return res


def condition_bound_check(config: AnalysisConfig, setup: Optional[Setup] = None) -> AnalysisReport:
    c = config
    if setup is None:
        setup = build_setup(c.p, c.q, c.L, c.ell, c.n_per_unit, c.potential, c.partition,
                            N=c.N, delta=c.delta, pu=c.pu)
    rng = np.random.default_rng(c.seed)
    floor = setup.potential_floor
    notes = []
    forms, lam1, lam2, interior = {}, [], [], []
    for nb in setup.neighborhoods:
        f = neighborhood_form(setup.grid, setup.V, setup.sigma, nb, setup.dofs, NEUMANN, floor)
        forms[nb.subdomain] = f
        ep = local_gevp(f, setup.pu.chi(nb.subdomain), 2)
        l1 = float(ep.eigenvalues[0])
        l2 = float(ep.eigenvalues[1]) if len(ep.eigenvalues) > 1 else float("inf")
        lam1.append(l1)
        lam2.append(l2)
        interior.append(not nb.boundary_touching)
        if l1 < -1e-8 * f.scale:
            notes.append(f"neighborhood {nb.subdomain}: negative smallest eigenvalue {l1:.6e}")
    combo = setup.combo
    C1, C0, bound = bound_constants(lam1, lam2, interior, combo.k_tilde_0, combo.N_c)
    if not np.isfinite(C1):
        notes.append("a referenced local eigenvalue is not positive; bound is vacuous")

    kappa, method = measure_kappa(setup.A_sigma, build_precond(setup, "as2", c.include_boundary),
                                  c.dense_limit, c.lanczos_steps, c.seed)
    kappa1, _ = measure_kappa(setup.A_sigma, build_precond(setup, "as1"), c.dense_limit,
                              c.lanczos_steps, c.seed)
    form_list = [forms[nb.subdomain] for nb in setup.neighborhoods]
    spsd = spsd_splitting_check(setup.A_sigma, form_list, c.samples, rng)
    tri = triangle_check(setup.A_sigma, setup.part, combo.N_c, c.samples, rng)
    split = 0.0
    if np.isfinite(C0):
        for _ in range(c.split_samples):
            v = rng.standard_normal(setup.A_sigma.nrows)
            split = max(split, stable_split_check(v, setup, forms, C0).ratio)
    gs = [ground_state_check(setup, nb) for nb in setup.neighborhoods if not nb.boundary_touching]
    return AnalysisReport(setup.grid.L, setup.sigma, setup.A_sigma.nrows, setup.part.N,
                          combo.N_c, combo.k_tilde_0, lam1, lam2, interior, C1, C0, bound,
                          kappa, method, kappa1, spsd, tri, split, gs, notes)

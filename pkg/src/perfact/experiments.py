"""Experiment drivers behind the command line interface.

Each driver writes CSV tables plus ``manifest.json`` into the output
directory and returns the number of failed solver cells.  A failed cell is
written as an empty field and the sweep continues.
"""
from __future__ import annotations

import logging
import os
from typing import Dict, List, Optional

import numpy as np

from . import dilemma, eigen, krylov
from .analysis_checks import AnalysisConfig, AnalysisError, condition_bound_check
from .cell_solver import CellSolution, CellSolveError
from .config import ExperimentConfig
from .grid_fem import assemble_load
from .output import emit_csv, write_json
from .pipeline import Setup, build_precond, build_setup, cell_for
from .precond import PreconditionerError
from .sparse_core import FactorizationError, factorize

log = logging.getLogger(__name__)

SOLVER_ERRORS = (CellSolveError, PreconditionerError, FactorizationError, AnalysisError,
                 eigen.EigenSolveError, np.linalg.LinAlgError, ValueError)


class Run:
    def __init__(self, cfg: ExperimentConfig, out_dir, threads: int = 1):
        self.cfg = cfg
        self.out = str(out_dir)
        self.threads = max(1, int(threads))
        self.failures = 0
        self.constants: Dict[str, dict] = {}
        self._cells: Dict[int, CellSolution] = {}
        os.makedirs(self.out, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def cell(self, n: int) -> CellSolution:
        if n not in self._cells:
            c = self.cfg
            self._cells[n] = cell_for(c.p, c.q, c.ell, n, c.make_potential())
        return self._cells[n]

    def setup(self, L: int, n: Optional[int] = None, delta: Optional[int] = None) -> Setup:
        c = self.cfg
        n = c.n_per_unit if n is None else n
        delta = c.delta if delta is None else delta
        s = build_setup(c.p, c.q, L, c.ell, n, c.make_potential(), c.partition,
                        N=c.subdomain_count(L), counts=c.counts, delta=delta, pu=c.pu,
                        partition_file=c.partition_file, cell=self.cell(n))
        self.constants[f"L={L},n={n},delta={delta}"] = {
            "sigma": s.sigma, "N": s.part.N, "N_c": s.combo.N_c, "k_tilde_0": s.combo.k_tilde_0,
            "n_dofs": s.A_sigma.nrows}
        return s

    def fail(self, what: str, exc: Exception) -> None:
        self.failures += 1
        log.warning("%s failed: %s", what, exc)

    def manifest(self, extra: Optional[dict] = None) -> None:
        data = {"experiment": self.cfg.experiment, "config": self.cfg.to_dict(),
                "constants": self.constants, "failures": self.failures}
        if extra:
            data.update(extra)
        write_json(data, self.path("manifest.json"))


# ---------------------------------------------------------------- drivers

def run_dilemma(run: Run) -> None:
    c = run.cfg
    rows = dilemma.sigma_sweep(c.dilemma_h, c.lengths, c.R, c.Q, c.sigma_grid_size)
    dilemma.write_sweep_csv(rows, run.path("sigma_sweep.csv"))
    spectra = {str(L): vars(dilemma.fd_spectrum(c.dilemma_h, L)) for L in c.lengths}
    run.manifest({"spectra": spectra})


def _initial_guess(run: Run, n: int) -> np.ndarray:
    return np.ones(n) if run.cfg.initial_guess == "ones" else np.zeros(n)


def _pcg_counts(run: Run, s: Setup, names: List[str], tag: str, histories: bool) -> List:
    b = assemble_load(s.grid, s.dofs, 1.0)
    out = []
    for name in names:
        try:
            M = build_precond(s, name, run.cfg.include_boundary, run.threads)
            if name.startswith("as"):
                _, rep = krylov.pcg(s.A_sigma, M, b, _initial_guess(run, len(b)), run.cfg.rtol_i,
                                    run.cfg.kmax_inner)
            else:
                _, rep = krylov.gmres(s.A_sigma, M, b, _initial_guess(run, len(b)), run.cfg.rtol_i,
                                      run.cfg.kmax_inner)
            if histories:
                krylov.write_residual_csv(rep, run.path(f"residuals_{tag}_{name}.csv"))
            if not rep.converged:
                run.fail(f"{tag} {name}", RuntimeError(rep.stop_reason))
                out.append(None)
            else:
                out.append(rep.iterations)
        except SOLVER_ERRORS as exc:
            run.fail(f"{tag} {name}", exc)
            out.append(None)
    return out


def run_source(run: Run) -> None:
    c = run.cfg
    rows = []
    for L in c.lengths:
        try:
            s = run.setup(L)
        except SOLVER_ERRORS as exc:
            run.fail(f"setup L={L}", exc)
            rows += [(L, name, None) for name in c.preconditioners]
            continue
        counts = _pcg_counts(run, s, c.preconditioners, f"L{L}", histories=True)
        rows += [(L, name, k) for name, k in zip(c.preconditioners, counts)]
    emit_csv(["L", "preconditioner", "iterations"], rows, run.path("iterations.csv"))
    run.manifest()


def run_parameter_study(run: Run) -> None:
    c = run.cfg
    names = c.preconditioners
    rows = []
    for n in c.n_list:
        for delta in c.delta_list:
            for L in c.lengths:
                try:
                    s = run.setup(L, n=n, delta=delta)
                    counts = _pcg_counts(run, s, names, f"n{n}_d{delta}_L{L}", histories=False)
                except SOLVER_ERRORS as exc:
                    run.fail(f"setup n={n} delta={delta} L={L}", exc)
                    counts = [None] * len(names)
                rows.append([1.0 / n, delta, L] + counts)
    emit_csv(["h", "delta", "L"] + names, rows, run.path("iterations.csv"))
    run.manifest()


def make_inner(s: Setup, name: str, strategy: str, rtol: float, kmax: int,
               threads: int = 1, include_boundary: bool = True) -> eigen.InnerSolver:
    """Inner solver by name: cg_as2, gmres_ras2, ras1, ras2 (stationary) or direct."""
    if name == "direct":
        return eigen.InnerSolver(eigen.DIRECT, factor=factorize(s.A_sigma), strategy=eigen.FIXED)
    kind, prec = {"cg_as2": (eigen.CG, "as2"), "gmres_ras2": (eigen.GMRES, "ras2"),
                  "ras1": (eigen.STATIONARY, "ras1"), "ras2": (eigen.STATIONARY, "ras2")}[name]
    M = build_precond(s, prec, include_boundary, threads)
    return eigen.InnerSolver(kind, M, strategy=strategy, rtol=rtol, kmax=kmax)


def _outer(run: Run, s: Setup, inner: eigen.InnerSolver) -> eigen.EigenSolveReport:
    c = run.cfg
    if c.outer_method == "ipm":
        return eigen.shifted_ipm(s.A, s.B, s.sigma, inner, c.tol_o, c.kmax_outer)
    return eigen.si_lopcg(s.A, s.B, s.sigma, inner, c.tol_o, c.kmax_outer)


def run_eig(run: Run) -> None:
    c = run.cfg
    rows = []
    for L in c.lengths:
        try:
            s = run.setup(L)
        except SOLVER_ERRORS as exc:
            run.fail(f"setup L={L}", exc)
            rows += [(L, name, None, None, None, None) for name in c.inner]
            continue
        for name in c.inner:
            try:
                inner = make_inner(s, name, c.strategies[0], c.rtol_i, c.kmax_inner, run.threads,
                                   c.include_boundary)
                rep = _outer(run, s, inner)
                eigen.write_eigen_csv(rep, run.path(f"history_L{L}_{name}.csv"))
                if not rep.converged:
                    raise eigen.EigenSolveError("outer iteration limit reached", rep)
                rows.append((L, name, rep.outer_iterations, rep.max_inner, rep.sum_inner,
                             rep.eigenvalue))
            except SOLVER_ERRORS as exc:
                run.fail(f"L={L} {name}", exc)
                rows.append((L, name, None, None, None, None))
    emit_csv(["L", "inner", "it_o", "max_i", "sum_i", "eigenvalue"], rows, run.path("table.csv"))
    run.manifest()


def run_fused(run: Run) -> None:
    c = run.cfg
    name = c.inner[0] if c.inner else "gmres_ras2"
    rows = []
    for L in c.lengths:
        try:
            s = run.setup(L)
        except SOLVER_ERRORS as exc:
            run.fail(f"setup L={L}", exc)
            rows += [(L, st, None, None, None) for st in c.strategies]
            continue
        for strategy in c.strategies:
            try:
                inner = make_inner(s, name, strategy, c.rtol_i, c.kmax_inner, run.threads,
                                   c.include_boundary)
                rep = _outer(run, s, inner)
                cum = np.concatenate([[0], np.cumsum(rep.inner_iterations_per_outer)])
                emit_csv(["cumulative_inner_iterations", "spectral_residual"],
                         zip(cum.tolist(), rep.spectral_residual_history),
                         run.path(f"convergence_L{L}_{strategy}.csv"))
                if not rep.converged:
                    raise eigen.EigenSolveError("outer iteration limit reached", rep)
                rows.append((L, strategy, rep.outer_iterations, rep.sum_inner, rep.eigenvalue))
            except SOLVER_ERRORS as exc:
                run.fail(f"L={L} {strategy}", exc)
                rows.append((L, strategy, None, None, None))
    emit_csv(["L", "strategy", "it_o", "sum_i", "eigenvalue"], rows, run.path("summary.csv"))
    run.manifest({"inner_solver": name})


def run_analysis(run: Run) -> None:
    c = run.cfg
    rows = []
    for L in c.lengths:
        acfg = AnalysisConfig(c.p, c.q, L, c.ell, c.n_per_unit, c.make_potential(), c.partition,
                              c.subdomain_count(L), c.delta, c.pu, c.include_boundary,
                              c.samples, c.split_samples, c.seed, c.dense_limit)
        try:
            rep = condition_bound_check(acfg, run.setup(L))
        except SOLVER_ERRORS as exc:
            run.fail(f"analysis L={L}", exc)
            rows.append((L, None, None, None, None, None, None))
            continue
        rep.write_json(run.path(f"analysis_L{L}.json"))
        rows.append((L, rep.C1, rep.C0, rep.bound, rep.measured_kappa, rep.kappa_one_level,
                     all(rep.checks().values())))
    emit_csv(["L", "C1", "C0", "bound", "kappa_two_level", "kappa_one_level", "all_checks_pass"],
             rows, run.path("summary.csv"))
    run.manifest()


DRIVERS = {"dilemma": run_dilemma, "source": run_source, "parameter_study": run_parameter_study,
           "eig": run_eig, "fused": run_fused, "analysis": run_analysis}


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1) -> int:
    """Run one experiment; returns the number of failed solver cells."""
    run = Run(cfg, out_dir, threads)
    DRIVERS[cfg.experiment](run)
    return run.failures

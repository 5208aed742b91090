"""One test per acceptance criterion; each records a PASS/FAIL line for the summary."""
import filecmp
import math
import os
import time

import numpy as np
import pytest

from perfact import cli, dilemma, eigen, krylov
from perfact.analysis_checks import (NEUMANN, PERIODIC, AnalysisConfig, condition_bound_check,
                                     ground_state_check, neighborhood_form, spsd_splitting_check,
                                     triangle_check)
from perfact.cell_solver import solve_cell_problem
from perfact.experiments import make_inner
from perfact.grid_fem import PlaneGradient3D, SeparableSinSq, TensorGrid, ZeroPotential, assemble_load
from perfact.pipeline import build_precond, build_setup, cell_for
from perfact.sparse_core import dense_gevp


def test_criterion_1_cell_shift(record):
    t = time.perf_counter()
    cell = solve_cell_problem(TensorGrid(1, 1, 1, 1.0, 30), SeparableSinSq())
    sec = time.perf_counter() - t
    ok = abs(cell.sigma - 19.32644) <= 5e-4 and sec < 5
    record(1, ok, f"sigma={cell.sigma:.8f} target 19.32644 +- 5e-4", sec)
    assert ok


def test_criterion_2_dilemma_limits(record):
    t = time.perf_counter()
    h = 0.1
    s4 = dilemma.fd_spectrum(h, 1e4)
    rho = dilemma.iteration_estimates(s4, s4.sigma_inf, 2, 2).rho_ipm
    s6 = dilemma.fd_spectrum(h, 1e6)
    kap = dilemma.iteration_estimates(s6, 0.0, 2, 2).kappa
    lim = (1 + math.cos(math.pi * h / 2) ** 2) / math.sin(math.pi * h / 2) ** 2
    k1 = dilemma.iteration_estimates(dilemma.fd_spectrum(h, 1e3), s4.sigma_inf, 2, 2).kappa
    k2 = dilemma.iteration_estimates(dilemma.fd_spectrum(h, 2e3), s4.sigma_inf, 2, 2).kappa
    sec = time.perf_counter() - t
    ok = (abs(rho - 0.25) <= 1e-6 and abs(kap - lim) <= 1e-6 * lim
          and 3.9 <= k2 / k1 <= 4.1 and sec < 1)
    record(2, ok, f"rho={rho:.9f} kappa_rel_err={abs(kap - lim) / lim:.2e} doubling={k2 / k1:.4f}",
           sec)
    assert ok


def test_criterion_3_sweep_monotone(record):
    t = time.perf_counter()
    rows = np.array(dilemma.sigma_sweep())
    n4 = rows[rows[:, 1] == 4, 4]
    n7 = rows[rows[:, 1] == 7, 4]
    sec = time.perf_counter() - t
    ok = len(n4) == 200 and bool(np.all(n7 > n4)) and sec < 1
    record(3, ok, f"violations={int(np.sum(n7 <= n4))} of {len(n4)}", sec)
    assert ok


def test_criterion_4_length_robustness(record):
    t = time.perf_counter()
    V, n = SeparableSinSq(), 30
    cell = cell_for(1, 1, 1.0, n, V)
    counts = {"as1": [], "as2": []}
    Ls = (2, 4, 8, 16, 32)
    for L in Ls:
        s = build_setup(1, 1, L, 1.0, n, V, "slabs", N=L, delta=1, pu="distance", cell=cell)
        b = assemble_load(s.grid, s.dofs, 1.0)
        for name in counts:
            _, rep = krylov.pcg(s.A_sigma, build_precond(s, name), b, np.ones(len(b)), 1e-8)
            counts[name].append(rep.iterations if rep.converged else 10 ** 9)
    sec = time.perf_counter() - t
    a1, a2 = counts["as1"], counts["as2"]
    one = all(x < y for x, y in zip(a1, a1[1:])) and a1[-1] >= 3 * a1[0]
    two = max(a2) <= 1.5 * a2[Ls.index(8)]
    ok = one and two and sec < 600
    record(4, ok, f"AS1={a1} (one-level rule {'ok' if one else 'fails'}) "
                  f"AS2={a2} (two-level rule {'ok' if two else 'fails'})", sec)
    assert ok


def test_criterion_5_condition_bound(record):
    t = time.perf_counter()
    parts, ok_bound, ok_var = [], True, True
    for V in (ZeroPotential(), SeparableSinSq()):
        kap = {}
        for L in (2, 4, 8):
            rep = condition_bound_check(AnalysisConfig(L=L, potential=V, split_samples=10))
            kap[L] = rep.measured_kappa
            if L in (2, 4):
                ok_bound &= rep.bound_holds
                parts.append(f"{type(V).__name__} L={L} kappa={rep.measured_kappa:.3f} "
                             f"bound={rep.bound:.4g}")
        var = abs(kap[8] - kap[2]) / kap[2]
        ok_var &= var <= 0.30
        parts.append(f"{type(V).__name__} kappa L=2..8 {kap[2]:.3f}->{kap[8]:.3f} var={var:.0%}")
    sec = time.perf_counter() - t
    ok = ok_bound and ok_var and sec < 60
    record(5, ok, "; ".join(parts), sec)
    assert ok


def test_criterion_6_ground_state(record):
    t = time.perf_counter()
    worst_l, worst_a, count = 0.0, 0.0, 0
    for V in (ZeroPotential(), SeparableSinSq()):
        s = build_setup(1, 1, 6, 1.0, 4, V, "unit-cells", delta=1, pu="distance")
        for nb in s.neighborhoods:
            if nb.boundary_touching:
                continue
            g = ground_state_check(s, nb)
            for which in (NEUMANN, PERIODIC):
                worst_l = max(worst_l, abs(g[which]["lambda1"]) / g[which]["scale"])
                worst_a = max(worst_a, g[which]["angle"])
                count += 1
    sec = time.perf_counter() - t
    ok = count > 0 and worst_l <= 1e-8 and worst_a <= 1e-5 and sec < 60
    record(6, ok, f"{count} local problems, max |lambda|/scale={worst_l:.2e}, "
                  f"max angle={worst_a:.2e}", sec)
    assert ok


def test_criterion_7_splitting_and_triangle(record):
    t = time.perf_counter()
    bad, detail = 0, []
    for V in (ZeroPotential(), SeparableSinSq()):
        s = build_setup(1, 1, 4, 1.0, 4, V, "unit-cells", delta=1, pu="distance")
        rng = np.random.default_rng(42)
        forms = [neighborhood_form(s.grid, s.V, s.sigma, nb, s.dofs, NEUMANN, s.potential_floor)
                 for nb in s.neighborhoods]
        k0, Nc = s.combo.k_tilde_0, s.combo.N_c
        for _ in range(100):
            bad += spsd_splitting_check(s.A_sigma, forms, 1, rng) > k0 * (1 + 1e-10)
            bad += triangle_check(s.A_sigma, s.part, Nc, 1, rng) > 1 + 1e-10
        detail.append(f"{type(V).__name__}: k0={k0} N_c={Nc}")
    sec = time.perf_counter() - t
    ok = bad == 0 and sec < 60
    record(7, ok, f"violations={bad}; " + "; ".join(detail), sec)
    assert ok


def test_criterion_8_eigensolvers(record):
    t = time.perf_counter()
    s = build_setup(1, 1, 4, 1.0, 8, SeparableSinSq(), "slabs", N=4, delta=1, pu="distance")
    lam = dense_gevp(s.A.toarray(), s.B.toarray())[0][0]
    errs, its = {}, {}
    for strategy in ("fixed", "adaptive", "fused"):
        rep = eigen.si_lopcg(s.A, s.B, s.sigma, make_inner(s, "gmres_ras2", strategy, 1e-8, 10000),
                             1e-8, 500)
        errs[f"lopcg-{strategy}"] = abs(rep.eigenvalue - lam) if rep.converged else math.inf
    rep = eigen.shifted_ipm(s.A, s.B, s.sigma, make_inner(s, "direct", "fixed", 1e-8, 1), 1e-8, 500)
    errs["ipm"] = abs(rep.eigenvalue - lam) if rep.converged else math.inf
    for name in ("cg_as2", "gmres_ras2", "ras2", "direct"):
        rep = eigen.si_lopcg(s.A, s.B, s.sigma, make_inner(s, name, "fixed", 1e-8, 10000), 1e-8, 500)
        its[name] = rep.outer_iterations if rep.converged else -100
    sec = time.perf_counter() - t
    ok = max(errs.values()) <= 1e-8 and max(its.values()) - min(its.values()) <= 1 and sec < 60
    record(8, ok, f"max |lambda-ref|={max(errs.values()):.2e}, it_o={its}", sec)
    assert ok


def test_criterion_9_fused_3d(record):
    t = time.perf_counter()
    V = PlaneGradient3D()
    cell = cell_for(2, 1, 1.0, 10, V)
    total = {}
    for L in (4, 8):
        s = build_setup(2, 1, L, 1.0, 10, V, "unit-cells", delta=1, pu="distance", cell=cell)
        for strategy in ("fixed", "fused"):
            rep = eigen.si_lopcg(s.A, s.B, s.sigma,
                                 make_inner(s, "gmres_ras2", strategy, 1e-8, 10000), 1e-10, 1000)
            total[L, strategy] = rep.sum_inner if rep.converged else math.inf
    sec = time.perf_counter() - t
    growth = total[8, "fused"] / total[4, "fused"]
    faster = all(total[L, "fused"] <= total[L, "fixed"] for L in (4, 8))
    ok = growth <= 1.5 and faster and sec < 600
    record(9, ok, f"totals {dict((f'L{L}-{k}', v) for (L, k), v in total.items())}, "
                  f"fused growth={growth:.3f}", sec)
    assert ok


CONFIGS = {
    "dilemma": "[dilemma]\nsigma_grid_size = 50\n",
    "source": "[geometry]\nL_list = 2, 4\nn_per_unit = 6\n",
    "parameter_study": "[geometry]\nL_list = 2, 4\nn_list = 4, 6\n[decomposition]\ndelta_list = 1, 2\n",
    "eig": "[geometry]\nL_list = 2, 4\nn_per_unit = 6\n",
    "fused": "[geometry]\np = 2\nq = 1\nL_list = 2\nn_per_unit = 4\n[potential]\n"
             "kind = plane_gradient_3d\n[decomposition]\nmode = unit-cells\n[solver]\n"
             "inner = gmres_ras2\n",
    "analysis": "[geometry]\nL_list = 2, 4\nn_per_unit = 4\n[decomposition]\nmode = unit-cells\n"
                "[analysis]\nsamples = 20\nsplit_samples = 5\n",
}


def test_criterion_10_determinism(record, tmp_path):
    t = time.perf_counter()
    diffs, files = [], 0
    for exp, text in CONFIGS.items():
        cfg = tmp_path / f"{exp}.ini"
        cfg.write_text(text)
        outs = [tmp_path / f"{exp}_{k}" for k in (1, 2)]
        for o in outs:
            assert cli.main([exp, "--config", str(cfg), "--out", str(o)]) == cli.EXIT_OK
        names = sorted(os.listdir(outs[0]))
        assert names == sorted(os.listdir(outs[1]))
        _, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
        diffs += [f"{exp}/{m}" for m in mismatch + errors]
        files += len(names)
    sec = time.perf_counter() - t
    ok = not diffs
    record(10, ok, f"{files} artifacts compared, differing: {diffs or 'none'}", sec)
    assert ok

import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from perfact import dilemma


def test_eigenvalue_formula():
    assert math.isclose(dilemma.fd_eigenvalue(0.5, 2, 1, 1),
                        16 * (math.sin(math.pi / 8) ** 2 + math.sin(math.pi / 4) ** 2))


@pytest.mark.parametrize("h", [0.5, 0.1, 0.05])
@pytest.mark.parametrize("L", [2, 3, 7])
def test_lambda_order(h, L):
    s = dilemma.fd_spectrum(h, L)
    assert s.lambda1 < s.lambda2 < s.lambda_max
    assert s.sigma_inf < s.lambda1


def test_fd_laplacian_matches_formula():
    h, L = 0.1, 3
    w = np.sort(np.linalg.eigvalsh(dilemma.fd_laplacian(h, L).toarray()))
    s = dilemma.fd_spectrum(h, L)
    assert np.isclose(w[0], s.lambda1) and np.isclose(w[1], s.lambda2) and np.isclose(w[-1], s.lambda_max)


def test_limits():
    h = 0.1
    s = dilemma.fd_spectrum(h, 1e6)
    assert abs(s.lambda1 - s.sigma_inf) <= 1e-9 * s.sigma_inf
    est = dilemma.iteration_estimates(s, 0.0, math.e ** 7, math.e ** 4)
    lim = (1 + math.cos(math.pi * h / 2) ** 2) / math.sin(math.pi * h / 2) ** 2
    assert abs(est.kappa - lim) <= 1e-6 * lim
    s4 = dilemma.fd_spectrum(h, 1e4)
    assert abs(dilemma.iteration_estimates(s4, s4.sigma_inf, 2, 2).rho_ipm - 0.25) <= 1e-6
    k1 = dilemma.iteration_estimates(dilemma.fd_spectrum(h, 1e3), s.sigma_inf, 2, 2).kappa
    k2 = dilemma.iteration_estimates(dilemma.fd_spectrum(h, 2e3), s.sigma_inf, 2, 2).kappa
    assert 3.9 <= k2 / k1 <= 4.1


def test_errors():
    with pytest.raises(ValueError):
        dilemma.fd_spectrum(1.0, 4)
    s = dilemma.fd_spectrum(0.1, 4)
    with pytest.raises(ValueError):
        dilemma.iteration_estimates(s, s.lambda1, 2, 2)
    with pytest.raises(ValueError):
        dilemma.sigma_grid(0.1, 5)


def test_sweep_shape_and_monotonicity():
    rows = dilemma.sigma_sweep()
    assert len(rows) == 4 * 200
    arr = np.array(rows)
    for L in (4, 5, 6, 7):
        sub = arr[arr[:, 1] == L]
        assert np.all(np.diff(sub[:, 2]) < 0) and np.all(np.diff(sub[:, 3]) > 0)
    assert np.all(arr[arr[:, 1] == 7, 4] > arr[arr[:, 1] == 4, 4])


def test_sweep_csv(tmp_path):
    rows = dilemma.sigma_sweep(L_list=(4,), sigma_grid_size=10)
    dilemma.write_sweep_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sigma,L,n_ipm,n_cg,n_tot" and len(lines) == 11
    assert float(lines[1].split(",")[0]) == rows[0][0]

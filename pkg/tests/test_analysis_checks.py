import numpy as np
import pytest

from perfact import analysis_checks as ac
from perfact.grid_fem import SeparableSinSq, ZeroPotential
from perfact.pipeline import build_setup


@pytest.fixture(scope="module")
def zero6():
    return build_setup(1, 1, 6, 1.0, 4, ZeroPotential(), "unit-cells", delta=1, pu="distance")


def _forms(s):
    return {nb.subdomain: ac.neighborhood_form(s.grid, s.V, s.sigma, nb, s.dofs, ac.NEUMANN,
                                               s.potential_floor) for nb in s.neighborhoods}


def test_angle():
    u = np.array([1.0, 0.0])
    assert ac.angle(u, -3 * u) == 0.0
    assert ac.angle(u, np.array([0.0, 1.0])) == pytest.approx(np.pi / 2)
    assert np.isnan(ac.angle(u, np.zeros(2)))


def test_zero_vector_ratio(zero_setup):
    forms = list(_forms(zero_setup).values())
    assert ac.splitting_ratio(zero_setup.A_sigma, forms, np.zeros(zero_setup.A_sigma.nrows)) == 0.0


def test_single_subdomain_triangle_ratio_is_one(rng):
    s = build_setup(1, 1, 2, 1.0, 4, ZeroPotential(), "slabs", N=1, delta=1, pu="equal")
    assert ac.triangle_check(s.A_sigma, s.part, 1, 5, rng) == pytest.approx(1.0, rel=1e-12)


def test_spsd_and_triangle_within_constants(zero_setup, rng):
    s = zero_setup
    forms = [_forms(s)[nb.subdomain] for nb in s.neighborhoods]
    assert ac.spsd_splitting_check(s.A_sigma, forms, 20, rng) <= s.combo.k_tilde_0 * (1 + 1e-8)
    assert ac.triangle_check(s.A_sigma, s.part, s.combo.N_c, 20, rng) <= 1 + 1e-8


def test_boundary_neighborhood_positive(zero6):
    s = zero6
    nb = next(nb for nb in s.neighborhoods if nb.boundary_touching)
    ep = ac.neighborhood_gevp(s.grid, s.V, s.sigma, nb, s.pu.chi(nb.subdomain), ac.NEUMANN, 1,
                              s.dofs, s.potential_floor)
    assert ep.eigenvalues[0] > 0
    assert ep.n_infinite >= 0


def test_interior_ground_state_zero_and_periodic(zero6):
    s = zero6
    for nb in s.neighborhoods:
        if nb.boundary_touching:
            continue
        g = ac.ground_state_check(s, nb)
        for which in (ac.NEUMANN, ac.PERIODIC):
            assert abs(g[which]["lambda1"]) <= 1e-8 * g[which]["scale"]
            assert g[which]["angle"] <= 1e-6


def test_psi_projection_reproduced(zero6):
    s = zero6
    forms = _forms(s)
    res = ac.stable_split_check(s.psi, s, forms, 10.0)
    assert res.reconstruction_error <= 1e-11 * np.linalg.norm(s.psi)
    assert res.ratio <= 1.0


def test_psi_symmetric():
    s = build_setup(1, 1, 2, 1.0, 6, SeparableSinSq(), "unit-cells", delta=1, pu="distance")
    assert ac.psi_symmetry_defect(s.cell) <= 1e-9


def test_bound_constants():
    C1, C0, b = ac.bound_constants([0.5, 0.1], [2.0, 1.0], [False, True], 3, 2)
    assert C1 == 2.0 and C0 == 2 + 2 * 3 * 5 and b == C0 ** 2 * 3
    assert np.isinf(ac.bound_constants([0.0], [1.0], [False], 1, 1)[0])


def test_condition_bound_small(tmp_path):
    rep = ac.condition_bound_check(ac.AnalysisConfig(L=2, potential=ZeroPotential(), samples=10,
                                                     split_samples=5))
    assert rep.bound_holds and rep.spsd_holds and rep.triangle_holds and rep.split_holds
    assert rep.kappa_method == "dense"
    rep.write_json(tmp_path / "a.json")
    assert (tmp_path / "a.json").read_text().startswith("{")

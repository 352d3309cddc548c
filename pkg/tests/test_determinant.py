import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detscope.determinant import (BlaschkeData, DetEngine, DetValue, beta_gamma, beta_n, blaschke,
                                  continue_log, db_quotient, det2, log_blaschke,
                                  log_blaschke_derivative, log_derivative, real_axis_path,
                                  seed_height, seed_value, series_log)
from detscope.discretize import OperatorMatrix, assemble_q0, build_grid
from detscope.errors import PoleHit
from detscope.potential import Moments, gaussian_well, moments, zero_potential

GAUSS = gaussian_well(2.0, 1.0)


def _tensor(mat, k=0j):
    blocks = np.asarray(mat, dtype=complex)[None]
    return OperatorMatrix(k, "Q0", blocks, "tensor", np.zeros(1, dtype=int))


@pytest.fixture(scope="module")
def grid():
    return build_grid(GAUSS, 32, "radial")


@pytest.fixture(scope="module")
def engine(grid):
    return DetEngine(grid)


def test_det2_small_matrices():
    assert det2(_tensor(np.zeros((3, 3)))).D == 1
    assert det2(_tensor(np.zeros((3, 3)))).logD == 0
    assert det2(_tensor([[0.5]])).D == pytest.approx(1.5 * np.exp(-0.5), rel=1e-15)
    assert det2(_tensor([[0.5]])).D == pytest.approx(0.909796, abs=1e-6)
    assert det2(_tensor(np.diag([-1.0, 0.3]))).D == 0


@given(st.lists(st.complex_numbers(max_magnitude=0.9), min_size=1, max_size=6))
def test_det2_is_the_regularized_product(mu):
    mu = np.asarray(mu)
    dv = det2(_tensor(np.diag(mu)))
    expected = np.prod((1 + mu) * np.exp(-mu))
    assert dv.D == pytest.approx(expected, rel=1e-12, abs=1e-300)
    assert np.exp(dv.logD) == pytest.approx(dv.D, rel=1e-9)
    assert dv.rho == pytest.approx(np.log(abs(dv.D)), abs=1e-12)


def test_radial_det2_equals_product_after_correction(grid):
    dv = det2(assemble_q0(grid, k=1.0 + 0.5j))
    mu, m = dv.eigenvalues, dv.multiplicities
    plain = np.sum(m * (np.log(1 + mu) - mu))
    assert dv.logD == pytest.approx(plain + dv.correction, abs=1e-12)


def test_zero_potential_path():
    g = build_grid(zero_potential(), 8, "radial")
    path = real_axis_path(1.0, [0.5, 1.0, 2.0])
    assert all(v.logD == 0 for v in continue_log(path, g))


def test_mirror_paths(engine):
    tau = seed_height(engine)
    plus = continue_log(real_axis_path(tau, [1.5]), engine, path_id="p")[-1]
    minus = continue_log(-np.conj(real_axis_path(tau, [1.5])), engine, path_id="m")[-1]
    assert minus.phi == pytest.approx(-plus.phi, abs=1e-9)
    assert minus.rho == pytest.approx(plus.rho, abs=1e-9)


def test_seed_matches_principal_value(engine):
    tau = seed_height(engine)
    k0 = 1j * tau
    q0 = assemble_q0(engine.grid, k=k0)
    assert q0.operator_norm() < 0.5
    s, _ = series_log(q0)
    assert seed_value(engine, k0).logD == pytest.approx(s, abs=1e-10)
    assert det2(q0).logD == pytest.approx(s, abs=1e-10)


def test_seed_uses_cache(engine):
    tau = seed_height(engine)
    before = engine.assemblies
    seed_height(engine)
    seed_value(engine, 1j * tau)
    assert engine.assemblies == before + (0 if (("series", 1j * tau) in engine.cache) else 1)


def test_blaschke_examples():
    assert blaschke([], 0.3 + 1j) == 1
    assert blaschke([1.0], 2j) == pytest.approx(1 / 3)
    assert blaschke([1.0], 0.0) == pytest.approx(-1)
    assert (1j * log_blaschke([1.0], 1e-12)).real == pytest.approx(np.pi, abs=1e-9)
    with pytest.raises(PoleHit):
        blaschke([1.0], -1j)


@given(st.lists(st.floats(0.05, 5), min_size=1, max_size=4), st.floats(-20, 20))
def test_blaschke_unimodular_on_real_axis(kap, t):
    assert abs(blaschke(kap, t)) == pytest.approx(1.0, rel=1e-12)


@given(st.lists(st.floats(0.05, 5), min_size=1, max_size=4),
       st.complex_numbers(min_magnitude=0.5, max_magnitude=10))
@settings(max_examples=50)
def test_log_blaschke_derivative(kap, k):
    # the branch is analytic off the cuts i[-kappa, kappa]
    if abs(k.real) < 0.1 and abs(k.imag) < max(kap) + 0.1:
        return
    h = 1e-6
    fd = (log_blaschke(kap, k + h) - log_blaschke(kap, k - h)) / (2 * h)
    assert log_blaschke_derivative(kap, k) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_beta_gamma_examples():
    m = Moments(-1.0, 0.7, 0.1)
    bd = beta_gamma([1.0], m)
    assert bd.beta[0] == 2 and bd.beta[2] == pytest.approx(2 / 3)
    assert bd.gamma[0] == pytest.approx(0.7 - 2)
    none = beta_gamma([], m)
    assert none.gamma == {-1: -1.0, 0: 0.7, 1: 0.1}
    assert beta_gamma([1.0], Moments(-1.0, 0.7, np.nan)).gamma.keys() == {-1, 0}


@given(st.lists(st.floats(0.05, 5), min_size=1, max_size=5), st.integers(0, 5))
def test_beta_n_formula(kap, n):
    assert beta_n(kap, n) == pytest.approx(2 / (n + 1) * sum(x ** (n + 1) for x in kap))


def test_db_quotient():
    dv = DetValue(1.3 + 0j, 0.5 + 0.2j, np.log(0.5 + 0.2j), np.zeros(0), np.zeros(0))
    assert db_quotient(dv, beta_gamma([], Moments(0, 0, 0))) is dv
    q = db_quotient(dv, beta_gamma([0.7], Moments(0, 0, 0)))
    assert abs(q.D) == pytest.approx(abs(dv.D))
    assert q.rho == pytest.approx(dv.rho)


def test_log_derivative_zero_potential():
    assert log_derivative(build_grid(zero_potential(), 8, "radial"), k=1.0) == 0


def test_log_derivative_finite_difference(grid):
    k = 2 + 2j
    exact = log_derivative(grid, k=k, lmax=30)
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (det2(assemble_q0(grid, k=k + h, lmax=30)).logD
              - det2(assemble_q0(grid, k=k - h, lmax=30)).logD) / (2 * h)
        errs.append(abs(fd - exact))
    # O(h^2): halving h divides the error by about four
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.1)


def test_log_derivative_far_up_the_imaginary_axis(grid):
    m = moments(GAUSS)
    k = 40j
    # log D ~ -i (alpha_0 / k + alpha_1 / k^3)
    expected = 1j * m.alpha_0 / k**2 + 3j * m.alpha_1 / k**4
    assert log_derivative(grid, k=k) == pytest.approx(expected, rel=1e-3)


def test_detvalue_round_trip():
    dv = DetValue(1 + 2j, 0.3 - 0.1j, np.log(0.3 - 0.1j), np.array([0.1 + 0.2j]), np.array([3.0]),
                  0.01j, "path")
    back = DetValue.from_dict(dv.to_dict())
    assert back.k == dv.k and back.D == dv.D and back.logD == dv.logD
    np.testing.assert_array_equal(back.eigenvalues, dv.eigenvalues)
    slim = DetValue.from_dict(dv.to_dict(eigenvalues=False))
    assert slim.eigenvalues.size == 0 and slim.logD == dv.logD


def test_blaschke_data_dict():
    bd = BlaschkeData([1.0], 1, {0: 2.0}, {0: -1.0})
    assert bd.to_dict()["beta"] == {"0": 2.0}

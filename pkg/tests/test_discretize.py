import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from detscope.discretize import (MAX_RADIAL_NODES, assemble_pair, assemble_q, assemble_q0,
                                 assemble_q0_prime, build_grid, check_condition_c, kappa_max,
                                 radial_quadratic_trace, symmetrized_spectrum, wave_sum)
from detscope.errors import ResolutionTooLarge, SingularAtEigenvalue
from detscope.potential import gaussian_well, moments, polynomial_bump, zero_potential
from detscope.reference import trq0_squared_direct

GAUSS = gaussian_well(2.0, 1.0)


@pytest.fixture(scope="module")
def radial32():
    return build_grid(GAUSS, 32, "radial")


@pytest.fixture(scope="module")
def tensor8():
    return build_grid(GAUSS, 8, "tensor")


def test_tensor_grid_counts_and_weights():
    unit = polynomial_bump(1.0, 1.0)
    g = build_grid(unit, 2, "tensor")
    assert g.size == 8
    assert g.weights.sum() == pytest.approx(8.0, rel=1e-12)
    assert build_grid(unit, 4, "tensor").size == 64
    with pytest.raises(ResolutionTooLarge):
        build_grid(unit, 17, "tensor")
    with pytest.raises(ResolutionTooLarge):
        build_grid(unit, MAX_RADIAL_NODES + 1, "radial")


@given(st.integers(2, 60))
@settings(max_examples=15, deadline=None)
def test_radial_grid_weights(n):
    g = build_grid(GAUSS, n, "radial")
    assert np.all(g.weights > 0)
    assert np.all((g.nodes > 0) & (g.nodes < GAUSS.r_eff))
    assert g.weights.sum() == pytest.approx(GAUSS.r_eff, rel=1e-10)
    # every row integral covers [0, R]
    np.testing.assert_allclose(g.sub_weights.sum(axis=1), GAUSS.r_eff, rtol=1e-10)


def test_tensor_weights_fill_the_cube(tensor8):
    assert np.all(tensor8.weights > 0)
    assert tensor8.weights.sum() == pytest.approx((2 * GAUSS.r_eff) ** 3, rel=1e-10)


def test_zero_potential_gives_zero_matrices():
    g = build_grid(zero_potential(), 8, "tensor")
    assert not np.any(assemble_q0(g, k=1 + 1j).blocks)
    assert assemble_q0_prime(g, k=2.0).trace() == 0
    assert not np.any(assemble_q(g, k=0.5j).blocks)


def test_q0_decays_up_the_imaginary_axis(radial32):
    norms = [assemble_q0(radial32, k=1j * t).operator_norm() for t in (1, 4, 16, 64)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.05


@given(st.floats(-6, 6), st.floats(-0.5, 4))
@settings(max_examples=10, deadline=None)
def test_reflection_symmetry(re, im):
    """Q0(-conj k) is the entrywise conjugate of Q0(k) for real V."""
    g = build_grid(GAUSS, 12, "radial")
    k = complex(re, im)
    a = assemble_q0(g, k=k, lmax=6).blocks
    b = assemble_q0(g, k=-np.conj(k), lmax=6).blocks
    np.testing.assert_allclose(b, np.conj(a), atol=1e-12 * max(1.0, np.abs(a).max()))


def test_reflection_symmetry_two_node_tensor():
    g = build_grid(GAUSS, 2, "tensor")
    k = 1.3 + 0.4j
    np.testing.assert_allclose(assemble_q0(g, k=-np.conj(k)).dense(),
                               np.conj(assemble_q0(g, k=k).dense()), atol=1e-15)


def test_q0_prime_diagonal_is_the_bounded_kernel(tensor8):
    m = assemble_q0_prime(tensor8, k=0.7 + 0.2j).dense()
    v = GAUSS(tensor8.nodes)
    np.testing.assert_allclose(np.diag(m), tensor8.weights * v * 1j / (4 * np.pi), rtol=1e-12)
    assert np.all(np.isfinite(m))


@pytest.mark.parametrize("k", [2j, 1 + 1j, 5.0])
def test_trace_q0_prime_is_i_alpha_m1(radial32, k):
    # at real k the fitted wave tail, not N, limits the accuracy (8e-5 at k = 5)
    a = moments(GAUSS).alpha_m1
    assert abs(assemble_q0_prime(radial32, k=k).trace() - 1j * a) < 1e-4 * abs(a)


def test_q_identity(radial32):
    q0 = assemble_q0(radial32, k=0.8 + 0.3j, lmax=5)
    q = assemble_q(radial32, k=0.8 + 0.3j, lmax=5)
    eye = np.eye(q0.size)
    prod = np.einsum("lij,ljk->lik", eye + q0.blocks, eye - q.blocks)
    np.testing.assert_allclose(prod, np.broadcast_to(eye, prod.shape), atol=1e-10)


def test_q_singular_at_bound_state():
    from detscope.spectral import find_bound_states
    p = polynomial_bump(20.0, 1.0)
    g = build_grid(p, 32, "radial")
    bs = find_bound_states(g)
    assert len(bs) == 1
    with pytest.raises(SingularAtEigenvalue):
        assemble_q(g, k=1j * bs[0].sqrt_lambda)


def test_symmetrized_spectrum_is_real_on_imaginary_axis(tensor8):
    mu = symmetrized_spectrum(tensor8, 1.5j)
    assert np.max(np.abs(mu.imag)) < 1e-10 * np.max(np.abs(mu))


def test_pair_matches_separate_assemblies(radial32):
    a, b = assemble_pair(radial32, k=1.1 - 0.2j, lmax=7)
    np.testing.assert_allclose(a.blocks, assemble_q0(radial32, k=1.1 - 0.2j, lmax=7).blocks)
    np.testing.assert_allclose(b.blocks, assemble_q0_prime(radial32, k=1.1 - 0.2j, lmax=7).blocks)


def test_quadratic_term_against_direct_integral(radial32):
    for k in (0.5j, 1.0 + 0.5j, 3.0, 7.5):
        direct = trq0_squared_direct(GAUSS, k)
        assert abs(radial_quadratic_trace(radial32, k) - direct) < 1e-8 * abs(direct)


def test_quadratic_inner_rule_follows_k():
    """Raising the inner order at large |k| must not change well-resolved values."""
    coarse = build_grid(GAUSS, 48, "radial")
    fine = build_grid(GAUSS, 48, "radial", sub_order=160)
    for k in (6.0, 10.0):
        a, b = radial_quadratic_trace(coarse, k), radial_quadratic_trace(fine, k)
        assert abs(a - b) < 1e-12 * abs(b)


def test_condition_c():
    assert check_condition_c(build_grid(zero_potential(), 4, "radial")).min_distance == 1.0
    shallow = check_condition_c(build_grid(gaussian_well(0.1), 24, "radial"))
    assert shallow.passed and shallow.min_distance > 0.5


def test_condition_c_fails_at_zero_energy_resonance():
    def lowest(depth):
        g = build_grid(gaussian_well(depth), 32, "radial")
        mu, _ = assemble_q0(g, k=0.0, lmax=0).eigenvalues()
        return np.min(mu.real) + 1.0

    depth = brentq(lowest, 2.0, 3.5, xtol=1e-13)
    assert not check_condition_c(build_grid(gaussian_well(depth), 32, "radial")).passed


def test_wave_sum_tail_recovers_power_law():
    ells = np.arange(30)
    terms = (2 * ells + 1) / (ells + 0.5) ** 4
    total, _, _ = wave_sum(ells, terms)
    exact = 2 * 1.2020569031595942 * (8 - 1)  # 2 sum (l+1/2)^-3 = 2 (2^3 - 1) zeta(3)
    assert total == pytest.approx(exact, rel=1e-6)


def test_kappa_max_shrinks_with_support():
    small = build_grid(polynomial_bump(1.0, 1.0), 8, "radial")
    large = build_grid(polynomial_bump(1.0, 2.0), 8, "radial")
    assert kappa_max(large) == pytest.approx(kappa_max(small) / 2)

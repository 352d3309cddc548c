import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from detscope.errors import BoxTooSmall
from detscope.potential import gaussian_well, moments, polynomial_bump, square_well, zero_potential
from detscope.reference import (RadialProblem, _sw_function, autocorrelation, filon_exp,
                                lattice_trace, lemma41_expansion_check, radial_bound_states,
                                square_well_bound_state_equation, square_well_resonances,
                                trq0_squared_direct)


def test_square_well_bound_state_matches_matching_condition():
    bs = radial_bound_states(square_well(4.0, 1.0))
    assert len(bs) == 1 and bs[0].ell == 0 and bs[0].multiplicity == 1
    lam = brentq(lambda x: square_well_bound_state_equation(4.0, 1.0, x), 1e-6, 4.0 - 1e-9, xtol=1e-15)
    assert bs[0].sqrt_lambda == pytest.approx(np.sqrt(lam), rel=1e-8)
    assert bs[0].sqrt_lambda == pytest.approx(0.6380450482852378, rel=1e-8)


def test_shallow_and_zero_wells_have_no_bound_states():
    assert radial_bound_states(square_well(1.0, 1.0)) == []
    assert radial_bound_states(zero_potential()) == []


@pytest.mark.parametrize("depth", [12.0, 25.0])
def test_s_wave_count_follows_the_threshold_rule(depth):
    """An s-wave bound state appears each time sqrt(V0) a passes an odd multiple of pi/2."""
    s_wave = [b for b in radial_bound_states(square_well(depth, 1.0), lmax=0)]
    assert len(s_wave) == int(np.sqrt(depth) / np.pi + 0.5)


def test_radial_problem_validation():
    with pytest.raises(ValueError):
        RadialProblem(lambda r: 0 * r, ell=-1)
    with pytest.raises(TypeError):
        RadialProblem.from_potential(polynomial_bump(1.0).__class__(
            kind="zero", depth=0.0, width=1.0, center=(0.0, 0.0, 0.0), radial=False))


def test_square_well_resonances():
    roots = square_well_resonances(4.0, 1.0, region=(-6, 6, -1.8, 0))
    assert any(abs(r - (3.9277792399550 - 1.6475234703034j)) < 1e-10 for r in roots)
    for r in roots:
        assert abs(_sw_function(r, 4.0, 1.0)[0]) < 1e-10
        assert any(abs(s + np.conj(r)) < 1e-9 for s in roots)
    # the documented box holds no s-wave root
    assert square_well_resonances(4.0, 1.0) == []
    assert square_well_resonances(0.0, 1.0) == []
    with pytest.raises(NotImplementedError):
        square_well_resonances(4.0, ell=1)


@given(st.floats(0.0, 2.0))
@settings(max_examples=20, deadline=None)
def test_square_well_autocorrelation_is_the_lens_volume(t):
    V0 = 3.0
    lens = np.pi * (4 + t) * (2 - t) ** 2 / 12
    assert autocorrelation(square_well(V0, 1.0), t)[0] == pytest.approx(
        V0**2 * lens / (4 * np.pi), rel=1e-6, abs=1e-12)


@given(st.floats(-20, 20))
def test_filon_is_exact_for_quadratics(omega):
    t = np.linspace(0, 2, 9)
    g = 1 + t - 0.5 * t**2
    x, w = np.polynomial.legendre.leggauss(60)
    s = 1 + x
    exact = np.sum(w * (1 + s - 0.5 * s**2) * np.exp(1j * omega * s))
    assert filon_exp(g, t, omega) == pytest.approx(exact, rel=1e-10, abs=1e-12)


def test_trq0_direct_limits():
    p = gaussian_well(2.0, 1.0)
    a0 = moments(p).alpha_0
    assert trq0_squared_direct(zero_potential(), 1j) == 0
    k = 60j
    assert trq0_squared_direct(p, k) == pytest.approx(2j * a0 / k, rel=2e-3)
    with pytest.raises(ValueError):
        trq0_squared_direct(p, 1 - 1j)


def test_expansion_check_for_the_gaussian():
    chk = lemma41_expansion_check(gaussian_well(2.0, 1.0))
    assert chk.c1_rel_error < 1e-2
    assert chk.c3_rel_error < 0.1


def test_lattice_trace_guards():
    f = lambda E: np.where((E > 0.25) & (E < 4), 1.0, 0.0)  # noqa: E731
    with pytest.raises(BoxTooSmall):
        lattice_trace(gaussian_well(2.0), f, 2.0, 1.0, geometry="cube")
    with pytest.raises(BoxTooSmall):
        lattice_trace(gaussian_well(2.0), f, 3.0, 0.1)
    with pytest.raises(ValueError):
        lattice_trace(gaussian_well(2.0), f, 20.0, 0.1, geometry="torus")
    assert lattice_trace(zero_potential(), f, 20.0, 0.05) == 0.0


def test_radial_lattice_matches_the_spectral_shift():
    from detscope.traceform import BumpFunction
    # 0.19816 from the phase-shift side of the Krein formula
    f = BumpFunction.on_interval(0.25, 4.0)
    assert lattice_trace(gaussian_well(2.0, 1.0), f, 40.0, 0.02) == pytest.approx(0.19816, rel=2e-3)

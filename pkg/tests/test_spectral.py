import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detscope.determinant import DetEngine
from detscope.discretize import build_grid
from detscope.errors import DepthLimitExceeded, ZeroAtOrigin
from detscope.potential import gaussian_well, polynomial_bump, square_well, zero_potential
from detscope.reference import square_well_resonances
from detscope.spectral import (BoundState, HadamardData, Region, Resonance, SpectralCatalog,
                               breit_wigner_phi_prime, count_zeros, find_bound_states,
                               find_resonances, hadamard_fit)

SW_ROOT = 3.9277792399550 - 1.6475234703034j
AROUND_ROOT = Region(3.8, 4.05, -1.75, -1.55)


@pytest.fixture(scope="module")
def sw_grid():
    return build_grid(square_well(4.0, 1.0), 32, "radial")


def test_zero_potential_has_no_spectrum():
    g = build_grid(zero_potential(), 8, "radial")
    assert find_bound_states(g) == []
    assert count_zeros(Region(-3, 3, -1, 0), g) == 0
    cat = find_resonances(Region(-3, 3, -1, 0), g)
    assert cat.resonances == [] and cat.completeness_count == 0


def test_square_well_bound_states(sw_grid):
    bs = find_bound_states(sw_grid)
    assert len(bs) == 1 and bs[0].ell == 0
    assert bs[0].sqrt_lambda == pytest.approx(0.6380450482852378, rel=1e-6)
    # D-zero and Birman-Schwinger crossing agree
    assert bs[0].bs_crossing == pytest.approx(bs[0].sqrt_lambda, rel=1e-6)
    assert find_bound_states(build_grid(square_well(1.0, 1.0), 32, "radial")) == []


def test_bound_state_range_validation(sw_grid):
    with pytest.raises(ValueError):
        find_bound_states(sw_grid, tau_range=(1.0, 0.5))


def test_count_around_one_resonance(sw_grid):
    assert count_zeros(AROUND_ROOT, sw_grid) == 1
    assert count_zeros(AROUND_ROOT.mirrored(), sw_grid) == 1


def test_count_is_additive_under_subdivision(sw_grid):
    whole = count_zeros(AROUND_ROOT, sw_grid)
    assert sum(count_zeros(c, sw_grid) for c in AROUND_ROOT.split()) == whole


def test_resonance_matches_jost_oracle(sw_grid):
    oracle = square_well_resonances(4.0, 1.0, region=(3.8, 4.05, -1.75, -1.55))
    assert len(oracle) == 1 and abs(oracle[0] - SW_ROOT) < 1e-12
    cat = find_resonances(AROUND_ROOT, sw_grid)
    assert len(cat.resonances) == 1
    r = cat.resonances[0]
    assert abs(r.k - oracle[0]) < 1e-3
    assert r.multiplicity == 1 and r.ell == 0 and r.residual < 1e-8


def test_depth_gate(sw_grid):
    with pytest.raises(DepthLimitExceeded):
        count_zeros(Region(-1, 1, -50, 0), sw_grid)


def test_upper_half_plane_region_rejected(sw_grid):
    with pytest.raises(ValueError):
        find_resonances(Region(-1, 1, -1, 0.5), sw_grid)


@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(-3, -0.1), st.floats(0.1, 2))
def test_region_split_and_mirror(x, w, y, h):
    reg = Region(x, x + w, y, min(0.0, y + h))
    parts = reg.split()
    assert sum((p.re_max - p.re_min) * (p.im_max - p.im_min) for p in parts) == pytest.approx(
        (reg.re_max - reg.re_min) * (reg.im_max - reg.im_min))
    assert reg.mirrored().mirrored() == reg


def test_catalog_round_trip_and_mirror_defect():
    cat = SpectralCatalog([BoundState(0.5, 1, 1e-15, 0)],
                          [Resonance(1 - 1j, 1, 1e-14, 0), Resonance(-1 - 1j, 1, 1e-14, 0)],
                          Region(-2, 2, -2, 0), 2)
    back = SpectralCatalog.from_dict(cat.to_dict())
    assert back.to_dict() == cat.to_dict()
    assert cat.mirror_defect() == 0
    assert cat.N == 1 and cat.bound_state_momenta() == [0.5]
    assert len(cat.zeros(radius=1.0)) == 1


def test_hadamard_zero_potential():
    h = hadamard_fit(build_grid(zero_potential(), 8, "radial"))
    assert h.P(1.3 - 0.2j) == 0 and h.D0 == 1
    assert breit_wigner_phi_prime(2.0, h) == 0


@pytest.fixture(scope="module")
def gauss_hadamard():
    return hadamard_fit(DetEngine(build_grid(gaussian_well(2.0, 1.0), 32, "radial")))


def test_hadamard_symmetry(gauss_hadamard):
    h = gauss_hadamard
    assert abs(h.c1.real) < 1e-12 and abs(h.c3.real) < 1e-12 and abs(h.c2.imag) < 1e-12
    # the discarded parts are symmetry-forced zeros
    assert h.errors[1] < 1e-6
    assert np.log(abs(h.D0)) == pytest.approx(-0.74417604, abs=1e-5)


def test_breit_wigner_at_threshold(gauss_hadamard):
    assert breit_wigner_phi_prime(0.0, gauss_hadamard) == pytest.approx(gauss_hadamard.c1.imag)


def test_hadamard_round_trip(gauss_hadamard):
    back = HadamardData.from_dict(gauss_hadamard.to_dict())
    assert back.c1 == gauss_hadamard.c1 and back.D0 == gauss_hadamard.D0


@given(st.lists(st.complex_numbers(min_magnitude=0.5, max_magnitude=5), min_size=1, max_size=4),
       st.complex_numbers(max_magnitude=3))
@settings(max_examples=40)
def test_log_derivative_of_the_product(zs, k):
    zs = [z for z in zs if abs(z.imag) > 0.1]
    if not zs or min(abs(k - z) for z in zs) < 0.3:
        return
    h = HadamardData(0.3j, -0.1 + 0j, 0.05j, 0.7 + 0j, [(z, 1) for z in zs])
    eps = 1e-6
    fd = (h.P(k + eps) + h.log_product(k + eps) - h.P(k - eps) - h.log_product(k - eps)) / (2 * eps)
    assert h.log_derivative(k) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_zero_at_origin():
    # tune a bump onto the first zero-energy resonance: D(0) = 0 there
    from scipy.optimize import brentq
    from detscope.discretize import assemble_q0

    def lowest(depth):
        g = build_grid(polynomial_bump(depth, 1.0), 24, "radial")
        mu, _ = assemble_q0(g, k=0.0, lmax=0).eigenvalues()
        return np.min(mu.real) + 1.0

    depth = brentq(lowest, 5.0, 15.0, xtol=1e-14)
    with pytest.raises(ZeroAtOrigin):
        hadamard_fit(DetEngine(build_grid(polynomial_bump(depth, 1.0), 24, "radial")))

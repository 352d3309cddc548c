import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detscope.errors import NotDifferentiable
from detscope.potential import (Moments, evaluate, from_spec, gaussian_well, gradient, moments,
                                polynomial_bump, read_grid_file, sample_to_grid, split_weights,
                                square_well, write_grid_file, zero_potential)

points = st.lists(st.floats(-3, 3), min_size=3, max_size=3)


def test_peak_values():
    assert evaluate(zero_potential(), [0.3, -1, 2]) == 0.0
    assert evaluate(square_well(4.0, 1.0), [0.5, 0, 0]) == -4.0
    assert evaluate(gaussian_well(4.0, 1.0), [0, 0, 0]) == -4.0
    assert evaluate(square_well(4.0, 1.0), [1.5, 0, 0]) == 0.0


def test_gradient_examples():
    g = gradient(gaussian_well(1.0, 1.0), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(g, [2 * np.exp(-1.0), 0, 0], rtol=1e-14)
    for p in (gaussian_well(3.0), polynomial_bump(5.0)):
        np.testing.assert_array_equal(gradient(p, [0, 0, 0]), 0.0)
    with pytest.raises(NotDifferentiable):
        gradient(square_well(4.0), [0.1, 0, 0])


@given(points)
def test_gradient_matches_central_differences(x):
    p = polynomial_bump(3.0, 1.7)
    x = np.asarray(x)
    h = 1e-5
    fd = [(evaluate(p, x + h * e) - evaluate(p, x - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(gradient(p, x), fd, atol=1e-7)


@given(points, st.floats(0.1, 10), st.floats(0.3, 3))
def test_radial_models_are_nonpositive_and_vanish_outside_support(x, depth, width):
    for p in (gaussian_well(depth, width), polynomial_bump(depth, width), square_well(depth, width)):
        v = evaluate(p, x)
        assert v <= 0
        if np.linalg.norm(x) > p.r_eff:
            assert abs(v) <= p.support_cutoff * depth


def test_moments_closed_forms():
    z = moments(zero_potential())
    assert (z.alpha_m1, z.alpha_0, z.alpha_1) == (0.0, 0.0, 0.0)
    g = moments(gaussian_well(2.0, 1.0))
    # the Gaussian is cut where it falls below 1e-10 of its peak
    assert g.alpha_m1 == pytest.approx(-np.sqrt(np.pi) / 2, rel=1e-8)
    # (1/16 pi) int V^2 with int e^{-2r^2} d^3x = (pi/2)^{3/2}
    assert g.alpha_0 == pytest.approx(4 * (np.pi / 2) ** 1.5 / (16 * np.pi), rel=1e-10)
    s = moments(square_well(4.0, 1.0), include_alpha1=False)
    assert s.alpha_m1 == pytest.approx(-4 / 3, rel=1e-6)
    # pi times V0^2 a^3 / (12 pi): the normalization of the large-k expansion
    assert s.alpha_0 == pytest.approx(4 / 3, rel=1e-6)
    assert np.isnan(s.alpha_1)


def test_gaussian_alpha1_closed_form():
    # int |grad V|^2 = 3 pi^{3/2} V0^2 / (2 sqrt 2), int V^3 = -V0^3 (pi/3)^{3/2}  (sigma = 1)
    V0 = 2.0
    grad2 = 3 * np.pi**1.5 * V0**2 / (2 * np.sqrt(2))
    cube = -(V0**3) * (np.pi / 3) ** 1.5
    expected = (grad2 + 2 * cube) / (192 * np.pi)
    assert moments(gaussian_well(V0, 1.0)).alpha_1 == pytest.approx(expected, rel=1e-9)


def test_alpha1_rejected_for_square_well():
    with pytest.raises(NotDifferentiable):
        moments(square_well(4.0), include_alpha1=True)


@given(st.floats(0.1, 20), st.floats(0.3, 3))
@settings(max_examples=20, deadline=None)
def test_moment_scaling(depth, width):
    """alpha_{-1} is linear and alpha_0 quadratic in the depth; both scale with width^3."""
    m = moments(polynomial_bump(depth, width))
    ref = moments(polynomial_bump(1.0, 1.0))
    assert m.alpha_m1 == pytest.approx(depth * width**3 * ref.alpha_m1, rel=1e-9)
    assert m.alpha_0 == pytest.approx(depth**2 * width**3 * ref.alpha_0, rel=1e-9)
    assert m.alpha_0 >= 0


def test_split_weights():
    assert split_weights(-4.0) == (2.0, -2.0)
    assert split_weights(0.0) == (0.0, 0.0)
    assert split_weights(9.0) == (3.0, 3.0)


@given(st.floats(-50, 50))
def test_split_weights_recombine(v):
    mag, sgn = split_weights(v)
    assert mag * sgn == pytest.approx(v, rel=1e-12, abs=1e-300)
    assert mag >= 0


def test_grid_file_round_trip(tmp_path):
    p = sample_to_grid(gaussian_well(2.0, 1.0), 9)
    write_grid_file(tmp_path / "v.dscp", p)
    q = read_grid_file(tmp_path / "v.dscp")
    np.testing.assert_array_equal(p.grid.values, q.grid.values)
    assert q.grid.origin == p.grid.origin and q.grid.spacing == p.grid.spacing
    assert p.spec() == q.spec()


def test_bad_grid_file(tmp_path):
    path = tmp_path / "bad.dscp"
    path.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(ValueError):
        read_grid_file(path)


def test_grid_moments_approach_analytic_values():
    # the gradient term carries the differencing error of the grid
    exact = moments(gaussian_well(2.0, 1.0))
    coarse = moments(sample_to_grid(gaussian_well(2.0, 1.0), 25))
    fine = moments(sample_to_grid(gaussian_well(2.0, 1.0), 41))
    assert abs(fine.alpha_1 - exact.alpha_1) < abs(coarse.alpha_1 - exact.alpha_1)
    assert fine.alpha_m1 == pytest.approx(exact.alpha_m1, rel=1e-6)
    assert fine.alpha_0 == pytest.approx(exact.alpha_0, rel=1e-6)


def test_from_spec_and_spec_round_trip():
    p = gaussian_well(2.0, 0.5, center=(0.1, 0, 0))
    assert from_spec(p.spec()).spec() == p.spec()
    assert from_spec({"kind": "zero"}).is_zero


def test_moments_dict():
    d = Moments(1.0, 2.0, 3.0).as_dict()
    assert d["alpha_m1"] == 1.0 and d["errors"] == [0.0, 0.0, 0.0]

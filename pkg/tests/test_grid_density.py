from math import gamma, pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.density import (QuantileProfile, RadialDensity, dilate, entropy, gaussian_profile, l1_distance,
                            make_steady_profile, moments_and_entropy, resample, second_moment, steady_cum_mass,
                            TruncationError)
from pkslab.grid import RadialGrid, ball_volume, graded_grid, grid_from_spec, sphere_area, support_grid, uniform_grid


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_sphere_area_closed_form(d):
    assert sphere_area(d) == pytest.approx(2 * pi ** (d / 2) / gamma(d / 2))


@given(n=st.integers(4, 400), R=st.floats(0.5, 1e3), core=st.floats(1e-3, 5.0), d=st.integers(2, 5))
def test_graded_weights_sum_to_ball_volume(n, R, core, d):
    g = graded_grid(n, R, core, d)
    assert g.n_cells == n
    assert g.R_max == pytest.approx(R, rel=1e-12)
    assert np.all(np.diff(g.nodes) > 0)
    assert g.weights.sum() == pytest.approx(ball_volume(R, d), rel=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.1, 1.0]))
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.0, 1.0, 0.5]))
    with pytest.raises(ValueError):
        grid_from_spec({"kind": "hexagonal"})


def test_support_grid_has_node_at_R():
    g = support_grid(1.0, 100, 3.0, 50, 3)
    assert 1.0 in g.nodes
    assert g.R_max == pytest.approx(3.0)


def test_moment_weights_exact():
    g = uniform_grid(7, 2.0, 3)
    assert g.moment_weights(2).sum() == pytest.approx(4 * pi * 2.0**5 / 5)


@given(sigma=st.floats(0.3, 3.0), M=st.floats(0.1, 50.0))
def test_gaussian_mass_moment_entropy(sigma, M):
    g = graded_grid(1500, 40 * sigma, sigma / 4)
    rho = gaussian_profile(M, sigma, g)
    assert rho.mass == pytest.approx(M, rel=1e-12)
    # cell averages carry an O(h^2) moment error
    assert second_moment(rho) == pytest.approx(2 * sigma**2 * M, rel=1e-4)
    # int rho log rho for the 2D Gaussian
    exact = M * np.log(M / (2 * pi * sigma**2)) - M
    assert entropy(rho) == pytest.approx(exact, rel=1e-4, abs=1e-4)


def test_steady_profile_truncation():
    g = graded_grid(500, 10.0, 0.5)
    with pytest.raises(TruncationError) as exc:
        make_steady_profile(1.0, 8 * pi, g)
    assert exc.value.tail_mass == pytest.approx(8 * pi * 1.0 / 101.0)
    rho = make_steady_profile(1.0, 8 * pi, g, tail_tol=1.0)
    assert rho.mass + rho.tail_mass == pytest.approx(8 * pi)


def test_steady_second_moment_diverges():
    rho = make_steady_profile(1.0, 8 * pi)
    assert moments_and_entropy(rho).second_moment_divergent
    assert np.isinf(moments_and_entropy(rho).second_moment)


@given(lam=st.floats(0.3, 3.0))
def test_dilation_preserves_mass_and_scales_moment(lam):
    g = graded_grid(600, 30.0, 0.3)
    rho = gaussian_profile(5.0, 1.0, g)
    r2 = dilate(rho, lam)
    assert r2.mass == pytest.approx(rho.mass, rel=1e-13)
    assert second_moment(r2) == pytest.approx(lam**2 * second_moment(rho), rel=1e-12)


def test_dilation_d3_shrinks_support():
    g = uniform_grid(10, 1.0, 3)
    rho = RadialDensity(g, np.ones(10))
    h = dilate(rho, 2.0)
    assert h.grid.R_max == pytest.approx(0.5)
    assert h.mass == pytest.approx(rho.mass)


def test_l1_distance_exact_for_shifted_steps():
    g1 = uniform_grid(2, 2.0)
    g2 = RadialGrid(np.array([0.0, 0.5, 2.0]))
    a = RadialDensity(g1, np.array([1.0, 0.0]))
    b = RadialDensity(g2, np.array([1.0, 0.0]))
    # mismatch on the annulus 0.5 < r < 1
    assert l1_distance(a, b) == pytest.approx(pi * (1.0 - 0.25))
    assert l1_distance(a, a) == 0.0


def test_resample_conserves_mass(fine_grid):
    rho = gaussian_profile(3.0, 1.0, fine_grid)
    coarse = resample(rho, graded_grid(97, 60.0, 1.0))
    assert coarse.mass == pytest.approx(rho.mass, rel=1e-12)


@given(q=st.floats(0.0, 1.0))
def test_quantile_inverts_mass_inside(q):
    g = graded_grid(300, 20.0, 0.5)
    rho = gaussian_profile(1.0, 1.0, g)
    r = rho.quantile_radius(q * rho.mass)
    assert rho.mass_inside(r) == pytest.approx(q * rho.mass, abs=1e-12)


def test_quantile_profile_roundtrip(fine_grid):
    rho = gaussian_profile(4 * pi, 1.0, fine_grid)
    p = QuantileProfile.from_density(rho, 200)
    assert p.n == 200 and p.mass == pytest.approx(4 * pi)
    assert np.all(np.diff(p.radii) > 0)
    back = p.to_density()
    assert back.mass == pytest.approx(4 * pi, rel=1e-12)
    # ring k sits at the mass-(k - 1/2) quantile
    assert rho.mass_inside(p.radii[0]) == pytest.approx(0.5 * p.particle_mass, rel=1e-6)


def test_steady_cum_mass_limit():
    assert steady_cum_mass(1e8, 2.0, 8 * pi) == pytest.approx(8 * pi)


@pytest.mark.parametrize("R_max", [20.0, 60.0, 1e3])
def test_tail_detection_flags_only_divergent_moments(R_max):
    g = graded_grid(1500, R_max, 0.25)
    assert not moments_and_entropy(gaussian_profile(1.0, 1.0, g)).second_moment_divergent
    if R_max >= 60:
        steady = make_steady_profile(1.0, 8 * pi, g, tail_tol=1.0)
        assert moments_and_entropy(steady).second_moment_divergent

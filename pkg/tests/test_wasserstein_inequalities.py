from math import pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.corpus import generate_corpus
from pkslab.density import QuantileProfile, dilate, gaussian_profile, make_steady_profile, second_moment
from pkslab.grid import graded_grid
from pkslab.inequalities import (GNS_REFERENCE_THRESHOLD, dd_gns, estimate_C_GNS, gns_quotient_values,
                                 inequality_suite, log_hls_deficit)
from pkslab.wasserstein import MassMismatchError, wasserstein2_radial


@given(lam=st.floats(0.5, 2.0))
def test_w2_between_dilations(lam):
    # radial dilation is the optimal map: W2^2 = (lam - 1)^2 int |x|^2 rho
    g = graded_grid(800, 30.0, 0.3)
    rho = gaussian_profile(2.0, 1.0, g)
    w = wasserstein2_radial(rho, dilate(rho, lam))
    assert w**2 == pytest.approx((lam - 1) ** 2 * second_moment(rho), rel=1e-5, abs=1e-12)


def test_w2_rings_closed_form():
    a = QuantileProfile(np.array([1.0, 2.0, 3.0]), 3.0)
    b = QuantileProfile(np.array([1.5, 2.0, 2.0]), 3.0)
    assert wasserstein2_radial(a, b) ** 2 == pytest.approx(0.25 + 0 + 1.0)


def test_w2_mass_mismatch():
    g = graded_grid(100, 10.0)
    with pytest.raises(MassMismatchError):
        wasserstein2_radial(gaussian_profile(1.0, 1.0, g), gaussian_profile(1.1, 1.0, g))


def test_w2_infinite_between_steady_profiles():
    # the profiles have infinite second moments; their quantiles separate like sqrt(lam)
    a = make_steady_profile(1.0, 8 * pi)
    b = make_steady_profile(2.0, 8 * pi)
    assert np.isinf(wasserstein2_radial(a, b))


def test_log_hls_zero_at_minimizer_positive_at_gaussian():
    rho = make_steady_profile(1.0, 8 * pi)
    _, rel = log_hls_deficit(rho)
    assert abs(rel) < 1e-4
    _, rel_g = log_hls_deficit(gaussian_profile(8 * pi, 1.0, graded_grid(1500, 40.0, 0.25)))
    assert rel_g > 1e-3


def test_gns_quotient_scale_invariant():
    g = graded_grid(600, 20.0, 0.3)
    u = np.exp(-g.centers**2)
    q = gns_quotient_values(u, g)
    assert gns_quotient_values(3.0 * u, g) == pytest.approx(q, rel=1e-12)


def test_dd_gns_equality_at_steady():
    rho = make_steady_profile(1.0, 8 * pi, graded_grid(2000, 1e4, 0.25))
    gap, ratio = dd_gns(rho.rho ** 0.25, rho.grid)
    assert abs(gap) < 1e-4
    assert ratio == pytest.approx(1.0, rel=1e-4)


def test_gns_threshold_close_to_reference():
    est = estimate_C_GNS()
    assert est.threshold == pytest.approx(GNS_REFERENCE_THRESHOLD, rel=0.02)
    # a maximizer search gives a lower bound on C, hence an upper bound on 4/C
    assert est.corpus_ratios[est.best_name] == est.C_gns


def test_corpus_seeded_and_sized():
    a = generate_corpus(30, seed=7)
    b = generate_corpus(30, seed=7)
    c = generate_corpus(30, seed=8)
    assert [m.name for m in a] == [m.name for m in b]
    assert all(np.array_equal(x.density.rho, y.density.rho) for x, y in zip(a, b))
    assert any(not np.array_equal(x.density.rho, y.density.rho) for x, y in zip(a, c))
    assert {m.kind for m in generate_corpus(60, seed=1)} == {"mixture", "perturbed"}


@given(seed=st.integers(0, 2**31 - 1))
def test_inequalities_hold_on_random_members(seed):
    for mem in generate_corpus(3, seed=seed):
        rep = inequality_suite(mem.density, lam=mem.lam)
        for name, gap in rep.gaps().items():
            assert gap >= -1e-8, (mem.name, name, gap)


def test_suite_rejects_three_dimensional_input():
    g = graded_grid(50, 5.0, 1.0, 3)
    with pytest.raises(ValueError):
        inequality_suite(gaussian_profile(1.0, 1.0, g))

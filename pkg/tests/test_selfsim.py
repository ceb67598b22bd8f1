import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.selfsim import find_ac, first_dip, positivity_components, profile_support, series_start, shoot


def test_constant_solution():
    tr = shoot(1.0)
    assert np.max(np.abs(tr.u - 1.0)) == 0.0
    assert positivity_components(tr) == 1 and profile_support(tr) is None


@given(a=st.floats(0.2, 100.0))
def test_series_start_satisfies_ode_to_leading_order(a):
    p = 3.0
    u, up = series_start(a, 3, p, 1e-4)
    # u'' + 2 u'/r at r -> 0 equals 3 u''(0) = 1 - a^p
    assert 3 * up / 1e-4 == pytest.approx(1 - a**p, rel=1e-12)
    assert u == pytest.approx(a + (1 - a**p) * 1e-8 / 6, rel=1e-14)


def test_extrema_alternate_around_one():
    tr = shoot(3.0)
    assert np.all(tr.maxima[1:, 1] > 1) and np.all(tr.minima[:, 1] < 1)
    # damped oscillation: maxima shrink toward 1
    assert np.all(np.diff(tr.maxima[1:, 1]) < 0)


@pytest.mark.parametrize("a,humps", [(10.0, 1), (50.0, 2), (90.0, 3)])
def test_positivity_humps(a, humps):
    tr = shoot(a, r_max=50.0)
    assert positivity_components(tr) == humps
    # the literal count also includes the unbounded last interval
    assert positivity_components(tr, closed_only=False) == humps + 1


def test_counts_stable_under_tolerance_halving():
    for a in (30.0, 70.0):
        assert positivity_components(shoot(a, rtol=1e-10)) == positivity_components(shoot(a, rtol=5e-11))


def test_threshold_bracket():
    cs = find_ac(tol=1e-6)
    lo, hi = cs.bracket
    assert hi - lo <= 1e-6 and lo < cs.a_c < hi
    assert cs.orientation == "above"
    assert first_dip(hi + 1e-3) < 0 < first_dip(lo - 1e-3)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        shoot(-1.0)
    with pytest.raises(ValueError):
        shoot(2.0, d=2)
    with pytest.raises(ValueError):
        find_ac(bracket=(1.5, 2.0))

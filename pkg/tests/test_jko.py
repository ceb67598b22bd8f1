from math import log, pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.density import QuantileProfile, gaussian_profile, l1_distance
from pkslab.grid import graded_grid
from pkslab.jko import (JKOConfig, el_residual, jko_run, jko_step, reconstruct_density, ring_energy,
                        weak_rate_defect)


def _radii(seed, n):
    rng = np.random.default_rng(seed)
    return np.cumsum(0.2 + rng.random(n))


def _dense(band):
    H = np.diag(band[2])
    H += np.diag(band[1, 1:], 1) + np.diag(band[1, 1:], -1)
    H += np.diag(band[0, 2:], 2) + np.diag(band[0, 2:], -2)
    return H


@pytest.mark.parametrize("rule", ["gap", "area"])
@given(seed=st.integers(0, 10_000))
def test_ring_energy_derivatives_by_finite_differences(rule, seed):
    r = _radii(seed, 20)
    M = 4 * pi
    F, g, band = ring_energy(r, M, True, rule)
    h = 1e-6 * r.min()
    fd = np.array([(ring_energy(r + h * e, M, rule=rule) - ring_energy(r - h * e, M, rule=rule)) / (2 * h)
                   for e in np.eye(r.size)])
    assert g == pytest.approx(fd, rel=1e-6, abs=1e-6 * np.abs(g).max())
    Hfd = np.array([(ring_energy(r + h * e, M, True, rule)[1] - ring_energy(r - h * e, M, True, rule)[1]) / (2 * h)
                    for e in np.eye(r.size)])
    assert _dense(band) == pytest.approx(Hfd, abs=1e-5 * np.abs(Hfd).max())


def test_ring_energy_infeasible():
    assert ring_energy(np.array([0.0, 1.0, 2.0]), 1.0) == np.inf
    assert ring_energy(np.array([1.0, 1.0, 2.0]), 1.0) == np.inf
    with pytest.raises(ValueError):
        ring_energy(np.array([1.0, 2.0]), 1.0, rule="voronoi")


@given(lam=st.floats(0.5, 2.0), n=st.integers(16, 80))
def test_ring_energy_dilation_law(lam, n):
    # gap cells carry M - mu/2; the interaction shift is M^2 / (4 pi) log lam
    r = np.sqrt(np.arange(1, n + 1, dtype=float))
    M = 8 * pi
    mu = M / n
    dF = ring_energy(lam * r, M) - ring_energy(r, M)
    assert dF == pytest.approx((M**2 / (4 * pi) - 2 * M + mu) * log(lam), abs=1e-9 * M)


@pytest.fixture(scope="module")
def gauss_profile():
    g = graded_grid(1000, 40.0, 0.5)
    rho = gaussian_profile(4 * pi, 1.0, g)
    return g, rho, QuantileProfile.from_density(rho, 128)


def test_step_certificate_and_euler_lagrange(gauss_profile):
    _, _, p = gauss_profile
    cfg = JKOConfig(tau=0.05, n=128)
    new, rep = jko_step(p, cfg)
    assert rep.accepted and not rep.supercritical
    assert rep.estimate_gap(cfg.tau) >= 0
    res, const = el_residual(p, new, cfg.tau)
    assert res <= 1e-8 * const
    assert new.mass == pytest.approx(p.mass)


def test_supercritical_step_flagged():
    g = graded_grid(600, 20.0, 0.5)
    p = QuantileProfile.from_density(gaussian_profile(12 * pi, 1.0, g), 64)
    _, rep = jko_step(p, JKOConfig(tau=0.01, n=64))
    assert rep.supercritical and rep.accepted


def test_run_energy_estimate_and_interpolation(gauss_profile):
    _, rho, _ = gauss_profile
    cfg = JKOConfig(tau=0.05, n=64)
    tr = jko_run(rho, 0.5, cfg)
    assert len(tr.reports) == 10
    assert np.all(np.diff(tr.energies) <= 0)
    assert tr.total_square_gap() >= 0
    assert np.allclose(tr.at(0.0).radii, tr.profiles[0].radii)
    assert np.allclose(tr.at(0.5).radii, tr.final.radii)


def test_weak_rate_defect_shrinks_with_tau(gauss_profile):
    _, _, p = gauss_profile
    phi = lambda r: np.exp(-r**2 / 4)
    dphi = lambda r: -0.5 * r * phi(r)
    d2phi = lambda r: (-0.5 + r**2 / 4) * phi(r)
    defects = []
    for tau in (0.04, 0.02, 0.01):
        new, _ = jko_step(p, JKOConfig(tau=tau, n=p.n))
        defects.append(abs(weak_rate_defect(p, new, tau, phi, dphi, d2phi)))
    assert defects[2] < defects[1] < defects[0]


def test_reconstruction_exact_mass_and_consistent(gauss_profile):
    g, rho, _ = gauss_profile
    errs = []
    for n in (64, 256):
        p = QuantileProfile.from_density(rho, n)
        rec = reconstruct_density(p, g)
        assert rec.mass == pytest.approx(4 * pi, rel=1e-12)
        errs.append(l1_distance(rec, rho))
    assert errs[1] < errs[0] / 3


@pytest.mark.parametrize("bad", [dict(tau=0.0), dict(n=4), dict(tol=0.0), dict(entropy_rule="voronoi")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        JKOConfig(**bad)

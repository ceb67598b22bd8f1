from fractions import Fraction

import numpy as np
import pytest

from pkslab.density import RadialDensity, dilate, lp_norm_power
from pkslab.porous import (ConstantsMismatch, G_family_formula, PMEConfig, PMEOperator, build_minimizer_V,
                           critical_exponent, critical_exponent_exact, estimate_Cstar_and_Mc, free_energy_G,
                           free_energy_G_direct, pme_run, solve_zeta, subcritical_lower_bound, virial_d_diagnostic,
                           vhls_quotient, zero_energy_mass)
from pkslab.grid import graded_grid


@pytest.mark.parametrize("d,exact", [(3, Fraction(4, 3)), (4, Fraction(3, 2)), (5, Fraction(8, 5))])
def test_critical_exponent_rational(d, exact):
    assert critical_exponent_exact(d) == exact
    assert critical_exponent(d) == float(exact)
    assert 1 < critical_exponent(d) < 2


def test_critical_exponent_range_large_d():
    ms = [critical_exponent(d) for d in range(3, 40)]
    assert all(1 < m < 2 for m in ms) and np.all(np.diff(ms) > 0)
    with pytest.raises(ValueError):
        critical_exponent(2)


def test_zeta_profile(zeta3):
    r = np.linspace(0, 1, 501)
    z = zeta3(r)
    assert zeta3.plug_back_residual() <= 1e-8
    assert abs(zeta3(1.0)) <= 1e-12
    assert np.all(z[:-1] > 0) and np.all(np.diff(z) < 0)
    assert zeta3.derivative(0.0) == 0.0
    # shooting and spectral collocation are independent routes to zeta(0)
    assert zeta3.zeta0 == pytest.approx(zeta3.zeta0_shoot, rel=1e-9)


def test_zeta_d4_residual():
    z = solve_zeta(4)
    assert z.plug_back_residual() <= 1e-8 and z.zeta0 > 0


@pytest.fixture(scope="module")
def V(zeta3):
    return build_minimizer_V(zeta3, 1.0, 2000)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_G_dilation_homogeneity(V, lam):
    m = critical_exponent(3)
    rho = V.density.scaled(0.7)
    assert free_energy_G(dilate(rho, lam), m) == pytest.approx(lam * free_energy_G(rho, m), rel=1e-6)


def test_G_fast_matches_pairwise():
    g = graded_grid(150, 2.0, 0.3, 3)
    rho = RadialDensity.from_function(g, lambda r: np.exp(-r**2 * 3))
    assert free_energy_G(rho, 4 / 3) == pytest.approx(free_energy_G_direct(rho, 4 / 3), rel=1e-6)


def test_family_formula_against_quadrature(V, constants3):
    m = constants3.m
    rho_t = V.density.scaled(constants3.M_c / V.mass)
    norm = lp_norm_power(rho_t, m)
    for ratio in (0.5, 2.0):
        quad = free_energy_G(rho_t.scaled(ratio), m)
        assert quad == pytest.approx(G_family_formula(ratio, norm, m), rel=1e-4)


def test_sign_flips_at_oracle_mass(V, constants3):
    m = constants3.m
    for eps, sign in ((-1e-3, 1), (1e-3, -1)):
        rho = V.density.scaled((1 + eps) * constants3.M_oracle / V.mass)
        assert np.sign(free_energy_G(rho, m)) == sign


def test_oracle_mass_gives_zero_energy(V):
    m = critical_exponent(3)
    Mz = zero_energy_mass(V, m)
    G = free_energy_G(V.density.scaled(Mz / V.mass), m)
    assert abs(G) <= 1e-6 * lp_norm_power(V.density.scaled(Mz / V.mass), m)


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_minimizer_mass_independent_of_R(zeta3, V, R):
    assert build_minimizer_V(zeta3, R, 2000).mass == pytest.approx(V.mass, rel=1e-10)


def test_vhls_local_maximum_under_bumps(V, constants3):
    m = constants3.m
    base = vhls_quotient(V.density, m)
    assert base == pytest.approx(constants3.C_star, rel=1e-6)
    rng = np.random.default_rng(3)
    rc = V.density.grid.centers
    for _ in range(8):
        c, w, a = rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.2), rng.uniform(-0.05, 0.05)
        bump = 1 + a * np.exp(-((rc - c) / w) ** 2)
        assert vhls_quotient(V.density.with_rho(V.density.rho * bump), m) < base


def test_constants_regression_anchor(constants3):
    # oracle-computed anchors for d = 3 (see the decisions ledger)
    assert constants3.exponent == 1.5
    assert constants3.M_c == pytest.approx(constants3.M_oracle, rel=1e-6)
    assert constants3.M_c == pytest.approx(202.8952, rel=1e-6)
    assert constants3.C_star == pytest.approx(2.183634, rel=1e-6)


def test_constants_mismatch_carries_values(zeta3):
    with pytest.raises(ConstantsMismatch) as exc:
        estimate_Cstar_and_Mc(3, n=200, rtol=1e-30, zeta=zeta3)
    assert np.isfinite(exc.value.oracle) and len(exc.value.formula) == 2


def _initial(V, ratio, cfg, M_c):
    g = cfg.grid()
    return RadialDensity.from_function(g, lambda r: ratio * M_c / V.mass * V.value(r))


def test_pme_step_positive_and_conservative(V, constants3):
    cfg = PMEConfig(n_cells=120)
    rho = _initial(V, 1.2, cfg, constants3.M_c)
    op = PMEOperator(rho.grid, cfg.m)
    new = op.implicit_step(rho, 1e-4)
    assert np.all(new >= 0)
    assert np.dot(rho.grid.weights, new) == pytest.approx(rho.mass, rel=1e-12)


def test_pme_dichotomy_and_virial(V, constants3):
    cfg = PMEConfig(n_cells=200, T_end=0.02, cadence=1e-4)
    sup = pme_run(_initial(V, 1.5, cfg, constants3.M_c), cfg)
    assert sup.verdict.detected
    fit = virial_d_diagnostic(sup)
    assert fit.rel_error < 0.02 and fit.ratio == pytest.approx(2.0, rel=0.02)
    sub_cfg = PMEConfig(n_cells=200, T_end=0.02, cadence=2e-3)
    sub = pme_run(_initial(V, 0.5, sub_cfg, constants3.M_c), sub_cfg)
    assert not sub.verdict.detected
    G0 = sub.column("G")[0]
    assert all(subcritical_lower_bound(s.density, constants3, sub_cfg.m) <= G0 for s in sub.states)


def test_pme_config_validation():
    with pytest.raises(ValueError):
        PMEConfig(d=2)
    with pytest.raises(ValueError):
        PMEConfig(m=1.0)
    assert PMEConfig().m == 4 / 3


def test_support_grid_density_is_compact(V):
    assert V.density.grid.R_max == 1.0
    assert V.value(np.array([1.0, 1.5])) == pytest.approx([0.0, 0.0], abs=1e-12)

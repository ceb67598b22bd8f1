from math import pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.density import RadialDensity, gaussian_profile, make_steady_profile
from pkslab.grid import graded_grid
from pkslab.pks2d import (BlowupImminent, Operator, SolverConfig, SolverState, Trajectory, BlowupVerdict,
                          bernoulli, blowup_upper_bound, decay_rate, entropy_bound, gelfand_map_residual, run,
                          solve_gelfand, step, virial_diagnostic, virial_slope)


def test_bernoulli_limits():
    x = np.array([-800.0, -1e-12, 0.0, 1e-12, 1.0, 800.0])
    b = bernoulli(x)
    assert b[2] == 1.0
    assert b[1] == pytest.approx(1.0) and b[3] == pytest.approx(1.0)
    assert b[4] == pytest.approx(1 / (np.e - 1))
    assert b[0] == pytest.approx(800.0) and b[5] == pytest.approx(0.0, abs=1e-300)
    # B(-x) = B(x) + x
    y = np.linspace(-5, 5, 11)
    assert bernoulli(-y) == pytest.approx(bernoulli(y) + y)


@given(seed=st.integers(0, 10_000), dt=st.floats(1e-4, 1.0))
def test_implicit_step_positive_and_conservative(seed, dt):
    rng = np.random.default_rng(seed)
    g = graded_grid(80, 10.0, 0.5)
    rho = RadialDensity(g, rng.random(80) * np.exp(-g.centers))
    rho = rho.scaled(30.0 / rho.mass)
    op = Operator(g)
    new = op.implicit_step(rho, dt, op.dpsi(rho))
    assert np.all(new >= 0)
    assert np.dot(g.weights, new) == pytest.approx(rho.mass, rel=1e-12)


def test_rate_conserves_mass():
    g = graded_grid(200, 20.0, 0.5)
    rho = gaussian_profile(10.0, 1.0, g)
    assert np.dot(g.weights, Operator(g).rate(rho)) == pytest.approx(0.0, abs=1e-12)


def test_gelfand_is_discrete_steady_state_of_rescaled_scheme():
    g = graded_grid(400, 15.0, 0.5)
    sol = solve_gelfand(4 * pi, g, tol=1e-12)
    assert gelfand_map_residual(sol) < 1e-11
    op = Operator(g, rescaled=True)
    r = op.rate(sol.u)
    assert np.max(np.abs(r)) < 1e-9 * sol.u.rho_max


def test_gelfand_mass_guard():
    with pytest.raises(ValueError):
        solve_gelfand(8 * pi)


def test_steady_profile_is_stationary_for_original_scheme():
    g = graded_grid(1000, 1e3, 0.5)
    rho = make_steady_profile(1.0, 8 * pi, g)
    r = Operator(g).rate(rho)
    assert np.max(np.abs(r) / rho.rho) < 1e-2              # O(h^2) consistency, not exactness
    cfg = SolverConfig(n_cells=1000, R_max=1e3, core=0.5, T_end=0.5, cadence=0.25)
    tr = run(rho, cfg)
    drift = np.dot(g.weights, np.abs(tr.final.density.rho - rho.rho)) / 0.5
    assert drift < 1e-6


def test_virial_quick_subcritical():
    cfg = SolverConfig(n_cells=300, R_max=30.0, core=0.5, T_end=0.5, cadence=0.025, dt_max=1e-3)
    tr = run(gaussian_profile(4 * pi, 1.0, cfg.grid()), cfg)
    fit = virial_diagnostic(tr)
    assert fit.predicted == pytest.approx(virial_slope(4 * pi), rel=1e-12)
    assert fit.relative_error < 0.01
    assert tr.total_increase <= 1e-8 * abs(tr.column("F_PKS")[0])
    assert tr.column("mass") == pytest.approx(4 * pi, rel=1e-12)


def test_blowup_verdict_before_bound():
    cfg = SolverConfig(n_cells=300, R_max=20.0, core=0.005, T_end=1.0, cadence=0.005, dt_max=2e-4, rho_ceiling=1e5)
    rho0 = gaussian_profile(12 * pi, 0.5, cfg.grid())
    tr = run(rho0, cfg, keep_states=False)
    assert tr.verdict.detected
    assert tr.verdict.time <= blowup_upper_bound(rho0)


def test_bounds_defined_on_their_side_only():
    g = graded_grid(200, 20.0, 0.5)
    sub, sup = gaussian_profile(4 * pi, 1.0, g), gaussian_profile(12 * pi, 1.0, g)
    assert blowup_upper_bound(sub) is None and entropy_bound(sup) is None
    assert blowup_upper_bound(sup) == pytest.approx(1.0, rel=1e-3)       # sigma^2 4 pi / (M - 8 pi) = 1
    assert entropy_bound(sub) > 0


def test_regularized_kernel_does_not_blow_up():
    cfg = SolverConfig(n_cells=120, R_max=10.0, core=0.05, T_end=0.3, cadence=0.05, kernel="regularized", eps=0.1,
                       dt_max=1e-3, rho_ceiling=1e5)
    tr = run(gaussian_profile(1.5 * 8 * pi, 0.3, cfg.grid()), cfg, keep_states=False)
    assert not tr.verdict.detected
    assert tr.final.mass == pytest.approx(12 * pi, rel=1e-12)


def test_step_raises_below_dt_min():
    cfg = SolverConfig(n_cells=50, R_max=10.0, dt_min=1e-3, dt_max=1.0)
    rho = gaussian_profile(12 * pi, 0.01, cfg.grid())
    with pytest.raises(BlowupImminent):
        step(SolverState(0.0, rho), cfg, dt=1e-4)


@pytest.mark.parametrize("bad", [dict(dt_min=1.0, dt_max=0.1), dict(eps=-1.0), dict(kernel="fft"),
                                 dict(kernel="regularized"), dict(cfl=0.0)])
def test_solver_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_decay_rate_recovers_exponent_and_ignores_plateau():
    t = np.linspace(0, 30, 301)
    y = np.maximum(np.exp(-1.7 * t), 1e-20)
    tr = Trajectory([], {"t": t, "wl2_to_ref": y}, BlowupVerdict(), SolverConfig())
    assert decay_rate(tr) == pytest.approx(1.7, rel=1e-9)

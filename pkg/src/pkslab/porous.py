"""Critical porous-medium Keller-Segel system in d >= 3.

    rho_t = div( grad rho^m - rho grad phi ),   phi = c_d |x|^{2-d} * rho,

with free energy G = int rho^m / (m - 1) - 1/2 iint K rho rho.  At
m = m_d = 2 (1 - 1/d) the mass-preserving dilation h_lam = lam^d h(lam x)
scales G by lam^{d-2}, which makes the critical mass M_c the mass of the
compactly supported minimizer V built from the Lane-Emden type profile zeta.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .density import ModelParams, RadialDensity, lp_norm_power, second_moment
from .energy import free_energy_G as _free_energy_G
from .field import interaction_integral, interaction_integral_direct, newton_constant, potential_increments
from .grid import RadialGrid, graded_grid, sphere_area, support_grid
from .pks2d import BlowupVerdict, SolverState, Trajectory, bernoulli


class ZetaShootingError(RuntimeError):
    pass


class ConstantsMismatch(RuntimeError):
    """Formula-based and oracle-based critical masses disagree."""

    def __init__(self, message: str, formula: dict, oracle: float):
        super().__init__(message)
        self.formula = formula
        self.oracle = oracle


def critical_exponent_exact(d: int) -> Fraction:
    """m_d = 2 (1 - 1/d) as a rational."""
    if int(d) != d or d < 3:
        raise ValueError("critical exponent is defined here for integer d >= 3")
    return Fraction(2 * (int(d) - 1), int(d))


def critical_exponent(d: int) -> float:
    """m_d rounded once to the nearest double (4/3 for d = 3)."""
    return float(critical_exponent_exact(d))


# ---------------------------------------------------------------------------
# zeta: Delta zeta + ((m-1)/m) zeta^{d/(d-2)} = 0 in B(0,1), zeta = 0 on the sphere

def _zeta_rhs(d: int):
    q = (critical_exponent(d) - 1.0) / critical_exponent(d)
    p = d / (d - 2.0)

    def f(r, y):
        z, dz = y
        return [dz, -(d - 1) / r * dz - q * np.abs(z) ** (p - 1) * z]

    return f, q, p


def _shoot_zeta(a: float, d: int, r_end: float, rtol: float, dense: bool = False):
    f, q, p = _zeta_rhs(d)
    # two-term series start clears the (d-1)/r singularity
    r0 = min(1e-4, 1e-3 / max(a, 1.0) ** ((p - 1) / 2))
    c2 = -q * a**p / (2 * d)
    y0 = [a + c2 * r0**2, 2 * c2 * r0]

    def hit(r, y):
        return y[0]

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(f, (r0, r_end), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-3,
                    events=hit, dense_output=dense)
    return sol


def _first_zero(a: float, d: int, rtol: float) -> float:
    sol = _shoot_zeta(a, d, 1e3, rtol)
    if sol.t_events[0].size == 0:
        return np.inf
    return float(sol.t_events[0][0])


@dataclass
class ZetaProfile:
    """zeta as an even Chebyshev series in r on [-1, 1] (so zeta'(0) = 0 exactly)."""

    d: int
    zeta0: float
    boundary_residual: float      # |zeta(1)|
    coef: np.ndarray = field(repr=False)
    zeta0_shoot: float = np.nan   # central value from the shooting bisection
    r: np.ndarray = field(repr=False, default=None)
    zeta: np.ndarray = field(repr=False, default=None)

    @property
    def m(self) -> float:
        return critical_exponent(self.d)

    @property
    def p(self) -> float:
        return self.d / (self.d - 2.0)

    def __call__(self, r):
        return C.chebval(np.asarray(r, dtype=float), self.coef)

    def derivative(self, r, order: int = 1):
        return C.chebval(np.asarray(r, dtype=float), C.chebder(self.coef, order))

    def residual(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        z, z1, z2 = self(r), self.derivative(r, 1), self.derivative(r, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = np.where(r > 0, z2 + (self.d - 1) * z1 / np.where(r > 0, r, 1.0), self.d * z2)
        q = (self.m - 1) / self.m
        return lap + q * np.abs(z) ** (self.p - 1) * z

    def plug_back_residual(self, n: int = 4001) -> float:
        """sup |zeta'' + (d-1) zeta'/r + q zeta^p| on a uniform mesh of [0, 1]."""
        return float(np.max(np.abs(self.residual(np.linspace(0.0, 1.0, n)))))

    def to_dict(self) -> dict:
        return {"d": self.d, "zeta0": self.zeta0, "zeta0_shoot": self.zeta0_shoot,
                "boundary_residual": self.boundary_residual,
                "plug_back_residual": self.plug_back_residual()}


def _collocate(a0: float, sol, d: int, K: int, tol: float, max_iter: int = 50):
    """Newton on the even Chebyshev collocation system, seeded by the shooting solution."""
    q = (critical_exponent(d) - 1) / critical_exponent(d)
    p = d / (d - 2.0)
    # positive Gauss-Chebyshev points of T_{2K}, plus the boundary condition at r = 1
    j = np.arange(K - 1)
    r = np.cos(np.pi * (j + 0.5) / (2 * K - 2))
    basis = [np.eye(2 * K - 1)[2 * k] for k in range(K)]        # T_0, T_2, ...
    T0 = np.column_stack([C.chebval(r, b) for b in basis])
    T1 = np.column_stack([C.chebval(r, C.chebder(b)) for b in basis])
    T2 = np.column_stack([C.chebval(r, C.chebder(b, 2)) for b in basis])
    L = T2 + (d - 1) * T1 / r[:, None]
    B = np.array([C.chebval(1.0, b) for b in basis])
    # seed: interpolate the shot at the Chebyshev points of T_{2K}
    rs = np.cos(np.pi * (np.arange(K) + 0.5) / (2 * K))
    r0 = sol.t[0]
    seed = np.where(rs > r0, sol.sol(np.maximum(rs, r0))[0], a0)
    A = np.column_stack([C.chebval(rs, b) for b in basis])
    c = np.linalg.solve(A, seed)
    for _ in range(max_iter):
        z = T0 @ c
        F = np.concatenate([L @ c + q * np.abs(z) ** (p - 1) * z, [B @ c]])
        J = np.vstack([L + (q * p * np.abs(z) ** (p - 1))[:, None] * T0, B])
        dc = np.linalg.solve(J, -F)
        c = c + dc
        if np.max(np.abs(dc)) <= tol * max(1.0, np.max(np.abs(c))):
            break
    full = np.zeros(2 * K - 1)
    full[::2] = c
    return full


def solve_zeta(d: int = 3, tol: float = 1e-12, bracket: tuple = (0.5, 1e4), n_modes: int = 64,
               n_samples: int = 1001) -> ZetaProfile:
    """Bisection shooting on zeta(0) for the first zero at r = 1, then spectral polishing.

    The shot value is kept as ``zeta0_shoot``; the collocation value must
    agree with it to roughly the integrator tolerance.
    """
    critical_exponent(d)
    rtol = max(tol * 1e-2, 3e-14)
    lo, hi = bracket
    f = lambda a: _first_zero(a, d, rtol) - 1.0
    if not (f(lo) > 0 > f(hi)):
        raise ZetaShootingError(f"no first-zero-at-1 bracket in zeta(0) in [{lo}, {hi}]")
    a = brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    sol = _shoot_zeta(a, d, 1.05, rtol, dense=True)
    coef = _collocate(a, sol, d, n_modes, 1e-15)
    rs = np.linspace(0.0, 1.0, n_samples)
    prof = ZetaProfile(d, float(C.chebval(0.0, coef)), float(abs(C.chebval(1.0, coef))), coef, float(a), rs)
    prof.zeta = prof(rs)
    return prof


# ---------------------------------------------------------------------------
# minimizer V and the free energy G

@dataclass
class MinimizerV:
    R: float
    mass: float
    density: RadialDensity = field(repr=False)
    zeta: ZetaProfile = field(repr=False)

    @property
    def d(self) -> int:
        return self.zeta.d

    def value(self, r):
        """Pointwise V(r) = R^-d zeta(r/R)^{d/(d-2)} on [0, R], zero outside."""
        r = np.asarray(r, dtype=float)
        x = np.clip(r / self.R, 0.0, 1.0)
        v = np.maximum(self.zeta(x), 0.0) ** self.zeta.p / self.R**self.d
        return np.where(r <= self.R, v, 0.0)


def build_minimizer_V(zeta: ZetaProfile, R: float = 1.0, n: int = 2000, R_max: Optional[float] = None,
                      n_outer: int = 0) -> MinimizerV:
    """V on a grid that has R as a node, so the support is exactly [0, R]."""
    if R <= 0:
        raise ValueError("R must be positive")
    grid = support_grid(R, n, R_max if R_max is not None else R, n_outer, zeta.d)
    proto = MinimizerV(R, 0.0, None, zeta)
    dens = RadialDensity.from_function(grid, proto.value, order=8)
    proto.density = dens
    proto.mass = dens.mass
    return proto


def free_energy_G(rho: RadialDensity, params: ModelParams | float) -> float:
    m = params.m if isinstance(params, ModelParams) else float(params)
    return _free_energy_G(rho, m)


def free_energy_G_direct(rho: RadialDensity, m: float) -> float:
    """Same functional with the O(N^2) pairwise interaction."""
    return lp_norm_power(rho, m) / (m - 1) - 0.5 * interaction_integral_direct(rho)


def G_family_formula(ratio: float, norm_m_power: float, m: float) -> float:
    """G[(M/M_c) rho_tilde] from the closed-form bracket, ratio = M / M_c."""
    return ratio**m * (1.0 - ratio ** (2.0 - m)) * norm_m_power / (m - 1.0)


def vhls_quotient(rho: RadialDensity, m: float) -> float:
    """iint rho rho / |x-y|^{d-2} / (||rho||_m^m ||rho||_1^{2/d})."""
    d = rho.d
    I = interaction_integral(rho) / newton_constant(d)
    return I / (lp_norm_power(rho, m) * rho.mass ** (2.0 / d))


@dataclass
class CriticalConstants:
    d: int
    m: float
    c_d: float
    sigma_d: float
    C_star: float
    M_c: float                 # formula value under the resolved exponent
    M_oracle: float            # mass at which G vanishes along the scaled V family
    exponent: float
    candidates: dict
    zeta0: float

    def to_dict(self) -> dict:
        return asdict(self)


def zero_energy_mass(V: MinimizerV, m: float) -> float:
    """Mass alpha * |V| with G[alpha V] = 0, found by root bracketing in alpha."""
    rho = V.density
    f = lambda a: free_energy_G(rho.scaled(a), m)
    lo, hi = 0.5, 2.0
    if not (f(lo) > 0 > f(hi)):
        raise ConstantsMismatch("zero-energy bracket failed", {}, np.nan)
    a = brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)
    return a * rho.mass


def estimate_Cstar_and_Mc(d: int = 3, n: int = 4000, rtol: float = 1e-6,
                          zeta: Optional[ZetaProfile] = None) -> CriticalConstants:
    """C_* as the VHLS quotient at V; M_c both from the bracket formula and the zero-energy oracle.

    The formula is evaluated for exponents 1 and d/2 on the bracket; the one
    matching the oracle within ``rtol`` is reported, and a mismatch for both
    raises with all values attached.
    """
    m = critical_exponent(d)
    zeta = solve_zeta(d) if zeta is None else zeta
    V = build_minimizer_V(zeta, 1.0, n)
    c_d = newton_constant(d)
    C_star = vhls_quotient(V.density, m)
    bracket = 2.0 / ((m - 1.0) * C_star * c_d)
    candidates = {1.0: bracket, d / 2.0: bracket ** (d / 2.0)}
    oracle = zero_energy_mass(V, m)
    errs = {e: abs(v / oracle - 1.0) for e, v in candidates.items()}
    best = min(errs, key=errs.get)
    if errs[best] > rtol:
        raise ConstantsMismatch("no bracket exponent reproduces the zero-energy mass",
                                {str(k): v for k, v in candidates.items()}, oracle)
    return CriticalConstants(d, m, c_d, sphere_area(d), C_star, candidates[best], oracle, best,
                             {str(k): v for k, v in candidates.items()}, zeta.zeta0)


# ---------------------------------------------------------------------------
# radial solver, d = 3 at desk scale

@dataclass
class PMEConfig:
    d: int = 3
    m: Optional[float] = None          # None -> m_d
    n_cells: int = 400
    R_max: float = 3.0
    core: float = 0.2
    cfl: float = 1.0                    # drift Courant number; the step is implicit
    rate: float = 0.05                  # bound on dt * max rho (concentration time scale)
    growth: float = 0.05                # bound on the relative change of max rho per step
    dt_min: float = 1e-12
    dt_max: float = 1e-3
    T_end: float = 0.1
    cadence: float = 0.002
    rho_ceiling: float = 1e3            # relative to the initial maximum
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("porous-medium solver needs d >= 3")
        if self.m is None:
            self.m = critical_exponent(self.d)
        if self.m <= 1:
            raise ValueError("m must exceed 1")
        for name in ("cfl", "rate", "growth", "dt_max", "T_end", "cadence"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def grid(self) -> RadialGrid:
        return graded_grid(self.n_cells, self.R_max, self.core, self.d)

    def to_dict(self) -> dict:
        return asdict(self)


def _fitted(dphi, D, k):
    """Exponentially fitted coefficients (a, b), flux = a rho_left - b rho_right."""
    a = np.empty_like(D)
    b = np.empty_like(D)
    live = D > 1e-14 * np.maximum(np.abs(dphi), 1e-300)
    pe = np.where(live, dphi / np.where(live, D, 1.0), 0.0)
    a[live] = k[live] * D[live] * bernoulli(-pe[live])
    b[live] = k[live] * D[live] * bernoulli(pe[live])
    # no diffusion: pure upwind drift
    a[~live] = k[~live] * np.maximum(dphi[~live], 0.0)
    b[~live] = k[~live] * np.maximum(-dphi[~live], 0.0)
    return a, b


class PMEOperator:
    """Linearly implicit fluxes for rho_t = div(grad rho^m - rho grad phi).

    At each interface the nonlinear diffusion is written as D (rho_R - rho_L)
    with D = rho_hat (h(rho_R) - h(rho_L)) / (rho_R - rho_L), h = m rho^{m-1}/(m-1),
    frozen at the old level together with the potential jump.  Scharfetter-Gummel
    fitting with Peclet number dphi / D gives an M-matrix, hence positivity,
    and reduces to upwind drift across the free boundary where D = 0.
    """

    def __init__(self, grid: RadialGrid, m: float):
        self.grid, self.m = grid, m
        self.h = np.diff(grid.centers)
        self.kappa = grid.sigma * grid.nodes[1:-1] ** (grid.d - 1) / self.h

    def diffusivity(self, rho: RadialDensity) -> np.ndarray:
        m = self.m
        L, R = rho.rho[:-1], rho.rho[1:]
        hL, hR = m / (m - 1) * L ** (m - 1), m / (m - 1) * R ** (m - 1)
        dr = R - L
        close = np.abs(dr) <= 1e-10 * np.maximum(R + L, 1e-300)
        mean = 0.5 * (L + R)
        sec = np.where(close, m * mean ** (m - 1), (hR - hL) / np.where(close, 1.0, dr))
        return mean * sec

    def coefficients(self, rho: RadialDensity):
        return _fitted(potential_increments(rho), self.diffusivity(rho), self.kappa)

    def fluxes(self, rho: RadialDensity) -> np.ndarray:
        a, b = self.coefficients(rho)
        return a * rho.rho[:-1] - b * rho.rho[1:]

    def implicit_step(self, rho: RadialDensity, dt: float, coef=None) -> np.ndarray:
        a, b = self.coefficients(rho) if coef is None else coef
        w = self.grid.weights
        n = w.size
        diag = w.copy()
        diag[:-1] += dt * a
        diag[1:] += dt * b
        ab = np.zeros((3, n))
        ab[0, 1:] = -dt * b
        ab[1] = diag
        ab[2, :-1] = -dt * a
        return np.maximum(solve_banded((1, 1), ab, w * rho.rho), 0.0)

    def admissible_dt(self, rho: RadialDensity, coef, config: "PMEConfig") -> float:
        dphi = potential_increments(rho)
        v = np.abs(dphi) / self.h**2
        vmax = np.max(v) if v.size else 0.0
        dt = config.rate / max(rho.rho_max, 1e-300)
        if vmax > 0:
            dt = min(dt, config.cfl / vmax)
        return min(dt, config.dt_max)


def pme_diagnostics(state: SolverState, m: float) -> dict:
    rho = state.density
    return {"t": state.t, "mass": rho.mass, "second_moment": second_moment(rho),
            "G": free_energy_G(rho, m), "Lm_power": lp_norm_power(rho, m),
            "rho_max": rho.rho_max, "dt": state.dt}


def pme_run(rho0: RadialDensity, config: PMEConfig, keep_states: bool = True) -> Trajectory:
    """Integrate to T_end or a blowup verdict (max rho past the ceiling, or dt collapse)."""
    if rho0.d != config.d:
        raise ValueError("initial density dimension differs from config.d")
    op = PMEOperator(rho0.grid, config.m)
    m = config.m
    t, rho = 0.0, rho0
    ceiling = config.rho_ceiling * rho0.rho_max
    state = SolverState(0.0, rho0, 0.0)
    states = [state] if keep_states else []
    series = {k: [v] for k, v in pme_diagnostics(state, m).items()}
    verdict = BlowupVerdict()
    G_prev = series["G"][0]
    max_rise = total_rise = 0.0
    next_sample = config.cadence
    start = time.perf_counter()
    n = 0
    while t < config.T_end - 1e-14 and n < config.max_steps:
        coef = op.coefficients(rho)
        dt_adm = op.admissible_dt(rho, coef, config)
        if dt_adm < config.dt_min:
            verdict = BlowupVerdict(True, t, "dt_collapse")
            break
        dt = min(dt_adm, next_sample - t, config.T_end - t)
        new = op.implicit_step(rho, dt, coef)
        # growth control: retry with smaller steps while max rho jumps too much
        while new.max() > (1 + config.growth) * rho.rho_max and dt > config.dt_min:
            dt *= 0.5
            dt_adm = dt
            new = op.implicit_step(rho, dt, coef)
        rho = rho.with_rho(new)
        t += dt
        n += 1
        if rho.rho_max >= ceiling:
            verdict = BlowupVerdict(True, t, "rho_ceiling")
        elif dt_adm < config.dt_min:
            verdict = BlowupVerdict(True, t, "dt_collapse")
        if t >= next_sample - 1e-14 or verdict.detected or t >= config.T_end - 1e-14:
            state = SolverState(t, rho, dt_adm)
            diag = pme_diagnostics(state, m)
            for k, v in diag.items():
                series[k].append(v)
            rise = diag["G"] - G_prev
            if rise > 0:
                max_rise = max(max_rise, rise)
                total_rise += rise
            G_prev = diag["G"]
            if keep_states:
                states.append(state)
            next_sample = t + config.cadence
        if verdict.detected:
            break
    if not keep_states:
        states = [SolverState(t, rho, 0.0)]
    return Trajectory(states, {k: np.asarray(v) for k, v in series.items()}, verdict, config, n,
                      max_rise, total_rise, time.perf_counter() - start)


@dataclass
class VirialDFit:
    slope: np.ndarray          # finite-difference d/dt of the second moment
    rhs: np.ndarray            # 2 (d - 2) G at the same times
    rel_error: float
    ratio: float               # mean slope / mean G, compare with 2 (d - 2)
    times: np.ndarray = field(repr=False, default=None)


def virial_d_diagnostic(traj: Trajectory, d: int = 3, t_max: Optional[float] = None,
                        min_samples: int = 10) -> VirialDFit:
    """Centred differences of the second moment against 2 (d - 2) G pointwise."""
    t = traj.column("t")
    m2 = traj.column("second_moment")
    G = traj.column("G")
    keep = np.ones_like(t, dtype=bool)
    if t_max is not None:
        keep &= t <= t_max
    elif traj.verdict.detected:
        keep &= t <= 0.8 * traj.verdict.time
    t, m2, G = t[keep], m2[keep], G[keep]
    if t.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {t.size}")
    slope = (m2[2:] - m2[:-2]) / (t[2:] - t[:-2])
    rhs = 2 * (d - 2) * G[1:-1]
    scale = np.max(np.abs(rhs))
    if scale == 0:
        scale = 1.0
    rel = float(np.max(np.abs(slope - rhs)) / scale)
    ratio = float(np.mean(slope) / np.mean(G[1:-1])) if np.mean(G[1:-1]) != 0 else np.nan
    return VirialDFit(slope, rhs, rel, ratio, t[1:-1])


def subcritical_lower_bound(rho: RadialDensity, consts: CriticalConstants, m: float) -> float:
    """(C_* c_d / 2)(M_c^{2/d} - M^{2/d}) ||rho||_m^m, a lower bound for G at mass M."""
    d = rho.d
    return 0.5 * consts.C_star * consts.c_d * (consts.M_c ** (2 / d) - rho.mass ** (2 / d)) * lp_norm_power(rho, m)

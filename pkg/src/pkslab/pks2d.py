"""Radial finite-volume solver for the 2D parabolic-elliptic PKS system.

Unknowns are cell averages rho_i; the evolved conserved quantity is the
cumulative mass m_j at the nodes, and one step updates
    dm_j/dt = F_j = 2 pi r_j (rho_r - rho psi_r)(r_j)
with psi = c (original variables) or psi = c - r^2/2 (rescaled variables).
Multiplying rho_t = Delta rho - div(rho grad c) by 2 pi r and integrating
from 0 to r, using c_r = -m/(2 pi r), gives the local equation
    m_t = m_rr - m_r / r + m m_r / (2 pi r).

Fluxes use the Scharfetter-Gummel form
    F_j = (2 pi r_j / h_j) [B(dpsi_j) rho_j - B(-dpsi_j) rho_{j-1}],
    B(x) = x / (e^x - 1),
where psi_i = log <exp(psi)>_i is the log cell average of the potential.
Freezing dpsi at the old level and solving the linear system for the new
rho gives an M-matrix: positivity, exact mass conservation, and discrete
equilibria rho_i ~ exp(psi_i) are exact steady states.
"""

from __future__ import annotations

import time as _time
from dataclasses import asdict, dataclass, field
from math import pi, sqrt
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .density import RadialDensity, l1_distance, moments_and_entropy, second_moment
from .energy import dissipation_D, free_energy_pks, hls_constant, relative_entropy
from .field import log_averaged_potential, regularized_drift_matrix
from .grid import RadialGrid, graded_grid

M_CRIT = 8 * pi


class BlowupImminent(RuntimeError):
    """Raised by :func:`step` when the admissible dt falls below dt_min."""

    def __init__(self, dt: float):
        super().__init__(f"time step {dt:.3e} below dt_min")
        self.dt = dt


@dataclass
class SolverConfig:
    n_cells: int = 1000
    R_max: float = 60.0
    core: float = 0.5                 # grading: spacing ~ core*asinh(R/core)/n near 0
    cfl: float = 2.0
    dt_min: float = 1e-10
    dt_max: float = 5e-3
    kernel: str = "exact"             # "exact" or "regularized"
    eps: float = 0.0
    T_end: float = 1.0
    cadence: float = 0.05
    rho_ceiling: float = 1e7
    lam: float = 1.0                  # reference steady profile for H_lambda
    rescaled: bool = False
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (0 < self.dt_min < self.dt_max):
            raise ValueError("need 0 < dt_min < dt_max")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.kernel not in ("exact", "regularized"):
            raise ValueError(f"unknown kernel mode {self.kernel!r}")
        if self.kernel == "regularized" and self.eps <= 0:
            raise ValueError("regularized kernel needs eps > 0")
        if min(self.cfl, self.rho_ceiling, self.T_end, self.cadence, self.lam) <= 0:
            raise ValueError("cfl, rho_ceiling, T_end, cadence and lam must be positive")

    def grid(self) -> RadialGrid:
        return graded_grid(self.n_cells, self.R_max, self.core)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverState:
    t: float
    density: RadialDensity
    dt: float = 0.0

    @property
    def mass(self) -> float:
        return self.density.mass

    def diagnostics(self, lam: float = 1.0) -> dict:
        rho = self.density
        mom = moments_and_entropy(rho)
        return {
            "t": self.t,
            "mass": mom.mass,
            "second_moment": mom.second_moment_truncated,
            "entropy": mom.entropy,
            "F_PKS": free_energy_pks(rho),
            "H_lambda": relative_entropy(rho, lam),
            "D": dissipation_D(rho),
            "rho_max": rho.rho_max,
            "dt": self.dt,
        }


@dataclass
class BlowupVerdict:
    detected: bool = False
    time: Optional[float] = None
    criterion: Optional[str] = None       # "rho_ceiling" or "dt_collapse"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    states: list
    series: dict
    verdict: BlowupVerdict
    config: SolverConfig
    n_steps: int = 0
    max_step_increase: float = 0.0      # largest per-step rise of the monitored energy
    total_increase: float = 0.0         # sum of all rises
    wall_time: float = 0.0
    reference: Optional[RadialDensity] = None

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.series["t"])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)

    @property
    def final(self) -> SolverState:
        return self.states[-1]


# ---------------------------------------------------------------------------
# spatial operator

def bernoulli(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        return np.where(small, 1.0 - 0.5 * x, xs / np.expm1(xs))


class Operator:
    """Frozen-coefficient flux operator on a fixed grid."""

    def __init__(self, grid: RadialGrid, kernel: str = "exact", eps: float = 0.0, rescaled: bool = False):
        self.grid = grid
        rc = grid.centers
        self.h = np.diff(rc)
        self.kappa = grid.sigma * grid.nodes[1:-1] / self.h
        self.rescaled = rescaled
        self.conf = -0.5 * np.diff(rc**2) if rescaled else 0.0
        self.A = None
        if kernel == "regularized":
            self.A = regularized_drift_matrix(grid, eps)[1:-1]
            # c_r at the node times the centre-to-centre distance
            self.A = self.A * self.h[:, None]

    def cell_potential(self, rho: RadialDensity) -> np.ndarray:
        return log_averaged_potential(rho, confinement=1.0 if self.rescaled else 0.0)

    def dpsi(self, rho: RadialDensity) -> np.ndarray:
        if self.A is None:
            return np.diff(self.cell_potential(rho))
        return self.A @ rho.rho + self.conf

    def node_fluxes(self, rho_vals: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
        """F_j = dm_j/dt at every node (zero at both ends)."""
        F = np.zeros(rho_vals.size + 1)
        F[1:-1] = self.kappa * (bernoulli(dpsi) * rho_vals[1:] - bernoulli(-dpsi) * rho_vals[:-1])
        return F

    def rate(self, rho: RadialDensity) -> np.ndarray:
        F = self.node_fluxes(rho.rho, self.dpsi(rho))
        return np.diff(F) / self.grid.weights

    def implicit_step(self, rho: RadialDensity, dt: float, dpsi: np.ndarray) -> np.ndarray:
        """Solve (W - dt K) rho_new = W rho_old for masses exactly conserved."""
        w = self.grid.weights
        bp = self.kappa * bernoulli(dpsi)      # couples to the right cell
        bm = self.kappa * bernoulli(-dpsi)     # couples to the left cell
        n = w.size
        diag = w.copy()
        diag[:-1] += dt * bm
        diag[1:] += dt * bp
        ab = np.zeros((3, n))
        ab[0, 1:] = -dt * bp
        ab[1] = diag
        ab[2, :-1] = -dt * bm
        new = solve_banded((1, 1), ab, w * rho.rho)
        return np.maximum(new, 0.0)

    def admissible_dt(self, dpsi: np.ndarray, cfl: float) -> float:
        v = np.abs(dpsi) / self.h
        vmax = np.max(v / self.h) if v.size else 0.0
        return np.inf if vmax == 0 else cfl / vmax


def _operator_for(grid: RadialGrid, config: SolverConfig, cache: dict | None = None) -> Operator:
    key = (id(grid), config.kernel, config.eps, config.rescaled)
    if cache is not None and key in cache:
        return cache[key]
    op = Operator(grid, config.kernel, config.eps, config.rescaled)
    if cache is not None:
        cache[key] = op
    return op


_OP_CACHE: dict = {}


def step(state: SolverState, config: SolverConfig, dt: float | None = None,
         op: Operator | None = None) -> SolverState:
    """Advance one linearly implicit step; dt defaults to the drift-CFL value."""
    rho = state.density
    if op is None:
        op = _operator_for(rho.grid, config, _OP_CACHE)
    dpsi = op.dpsi(rho)
    dt_cfl = min(op.admissible_dt(dpsi, config.cfl), config.dt_max)
    if dt is None:
        dt = dt_cfl
    if dt < config.dt_min:
        raise BlowupImminent(dt)
    new = op.implicit_step(rho, dt, dpsi)
    return SolverState(state.t + dt, rho.with_rho(new), dt)


# ---------------------------------------------------------------------------
# time integration

def _energy(rho: RadialDensity, rescaled: bool) -> float:
    F = free_energy_pks(rho)
    return F + 0.5 * second_moment(rho) if rescaled else F


def run(rho0: RadialDensity, config: SolverConfig, reference: RadialDensity | None = None,
        keep_states: bool = True) -> Trajectory:
    """Integrate to T_end or until the blowup verdict.

    Diagnostics are sampled every ``cadence`` time units (hitting the sample
    times exactly).  The monitored energy (F_PKS, or F^R when rescaled) is
    evaluated after every step and its rises are accumulated.
    """
    t0 = _time.perf_counter()
    op = Operator(rho0.grid, config.kernel, config.eps, config.rescaled)
    state = SolverState(0.0, rho0, 0.0)
    series: dict = {}
    states = []

    def sample(s: SolverState):
        diag = s.diagnostics(config.lam)
        if config.rescaled:
            diag["F_R"] = diag["F_PKS"] + 0.5 * diag["second_moment"]
        if reference is not None:
            diag["l1_to_ref"] = l1_distance(s.density, reference)
            diag["wl2_to_ref"] = weighted_l2(s.density, reference)
        for k, v in diag.items():
            series.setdefault(k, []).append(v)
        if keep_states or not states:
            states.append(s)
        else:
            states[-1:] = [states[0], s] if len(states) == 1 else [states[0], s]

    sample(state)
    verdict = BlowupVerdict()
    E_prev = _energy(rho0, config.rescaled)
    max_rise = total_rise = 0.0
    next_sample = config.cadence
    n = 0
    while state.t < config.T_end * (1 - 1e-14) and n < config.max_steps:
        rho = state.density
        dpsi = op.dpsi(rho)
        dt_adm = min(op.admissible_dt(dpsi, config.cfl), config.dt_max)
        if dt_adm < config.dt_min:
            verdict = BlowupVerdict(True, state.t, "dt_collapse")
            break
        target = min(next_sample, config.T_end)
        dt = dt_adm
        if state.t + dt >= target - 1e-12 * max(1.0, target):
            dt = target - state.t
        if dt <= 0:
            next_sample += config.cadence
            continue
        new = op.implicit_step(rho, dt, dpsi)
        # the recorded dt is the admissible one, so it tracks the collapse
        state = SolverState(state.t + dt, rho.with_rho(new), dt_adm)
        n += 1
        E = _energy(state.density, config.rescaled)
        rise = E - E_prev
        if rise > 0:
            max_rise = max(max_rise, rise)
            total_rise += rise
        E_prev = E
        if state.density.rho_max > config.rho_ceiling:
            verdict = BlowupVerdict(True, state.t, "rho_ceiling")
            break
        if state.t >= target - 1e-12 * max(1.0, target):
            sample(state)
            next_sample = target + config.cadence
    if verdict.detected or states[-1] is not state:
        if series["t"][-1] < state.t:
            sample(state)
    traj = Trajectory(states, series, verdict, config, n, max_rise, total_rise,
                      _time.perf_counter() - t0, reference)
    return traj


def run_rescaled(rho0: RadialDensity, config: SolverConfig, reference: RadialDensity | None = None,
                 **kw) -> Trajectory:
    """Integrate u_tau = Delta u - div(u (grad v - x)) in the self-similar variables.

    Time in the returned trajectory is tau.  With no reference, the Gelfand
    solution of the same mass on the same grid is used.
    """
    if rho0.mass >= M_CRIT:
        raise ValueError("rescaled runs need M < 8 pi")
    cfg = SolverConfig(**{**config.to_dict(), "rescaled": True})
    if reference is None:
        reference = solve_gelfand(rho0.mass, rho0.grid).u
    return run(rho0, cfg, reference, **kw)


def weighted_l2(u: RadialDensity, ref: RadialDensity, floor: float = 1e-250) -> float:
    """int |u - u_ref|^2 / u_ref over the cells where u_ref is representable."""
    keep = ref.rho > floor
    diff = u.rho[keep] - ref.rho[keep]
    return float(np.sum(u.grid.weights[keep] * diff**2 / ref.rho[keep]))


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class VirialFit:
    fitted: float
    predicted: float
    relative_error: float
    window: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def virial_slope(M: float) -> float:
    return 4 * M * (1 - M / M_CRIT)


def virial_diagnostic(traj: Trajectory, t_max: float | None = None, min_samples: int = 10) -> VirialFit:
    """Least-squares slope of the second moment against t.

    The relative error is taken against |predicted|, or against 4M when the
    prediction vanishes (critical mass).
    """
    t = traj.times
    m2 = traj.column("second_moment")
    keep = np.ones_like(t, dtype=bool)
    if t_max is not None:
        keep &= t <= t_max + 1e-12
    if traj.verdict.detected:
        keep &= t < traj.verdict.time
    if keep.sum() < min_samples:
        raise ValueError(f"need at least {min_samples} samples, have {int(keep.sum())}")
    slope = float(np.polyfit(t[keep], m2[keep], 1)[0])
    M = traj.column("mass")[0]
    pred = virial_slope(M)
    scale = abs(pred) if abs(pred) > 1e-12 * M else 4 * M
    return VirialFit(slope, pred, abs(slope - pred) / scale, (float(t[keep][0]), float(t[keep][-1])))


def blowup_upper_bound(rho0: RadialDensity) -> Optional[float]:
    """2 pi int |x|^2 rho0 / (M (M - 8 pi)) for M > 8 pi, else None."""
    M = rho0.mass
    mom = moments_and_entropy(rho0)
    if M <= M_CRIT or mom.second_moment_divergent:
        return None
    return 2 * pi * mom.second_moment / (M * (M - M_CRIT))


def entropy_bound(rho0: RadialDensity) -> Optional[float]:
    """(8 pi F_PKS[rho0] - M C(M)) / (8 pi - M), an upper bound on the entropy for M < 8 pi."""
    M = rho0.mass
    if M >= M_CRIT:
        return None
    return (8 * pi * free_energy_pks(rho0) - M * hls_constant(M)) / (8 * pi - M)


def decay_rate(traj: Trajectory, column: str = "wl2_to_ref", window: tuple | None = (1.0, None),
               plateau_factor: float = 1e3) -> float:
    """Exponential rate delta in column ~ C exp(-delta t), by a log-linear fit.

    Samples within ``plateau_factor`` of the smallest value are dropped so
    the round-off floor does not bias the fit.
    """
    t = traj.times
    y = traj.column(column)
    pos = y[y > 0]
    if pos.size == 0:
        raise ValueError("no positive samples")
    keep = y > plateau_factor * pos.min()
    if window is not None:
        lo, hi = window
        keep &= t >= lo
        if hi is not None:
            keep &= t <= hi
    if keep.sum() < 3:
        raise ValueError("too few samples above the plateau to fit a decay rate")
    return float(-np.polyfit(t[keep], np.log(y[keep]), 1)[0])


# ---------------------------------------------------------------------------
# Gelfand equation

@dataclass
class GelfandSolution:
    u: RadialDensity
    v: np.ndarray              # log cell average of exp(v - r^2/2), up to a constant
    residual: float
    iterations: int
    history: list = field(default_factory=list)


class GelfandNonConvergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _gelfand_exponent(u: RadialDensity) -> np.ndarray:
    return log_averaged_potential(u, confinement=1.0)


def solve_gelfand(M: float, grid: RadialGrid | None = None, tol: float = 1e-10, damping: float = 0.5,
                  max_iter: int = 5000) -> GelfandSolution:
    """Damped fixed point u <- (1-a) u + a M exp(v - r^2/2) / int exp(v - r^2/2).

    The exponent is the log cell average the rescaled solver uses, so the
    result is also the discrete steady state of that scheme.  The stopping
    residual is the L1 norm of u - T(u) for the undamped map T.
    """
    if not 0 < M < M_CRIT:
        raise ValueError("Gelfand solutions exist for 0 < M < 8 pi")
    if grid is None:
        grid = graded_grid(1000, 20.0, 0.5)
    w = grid.weights

    def normalize(expo):
        expo = expo - expo.max()
        e = np.exp(expo)
        return M * e / np.dot(w, e)

    u = RadialDensity(grid, normalize(-0.5 * grid.centers**2))
    history = []
    for it in range(1, max_iter + 1):
        target = normalize(_gelfand_exponent(u))
        # undamped map residual; the damped iterate gap is a fraction of it
        res = float(np.dot(w, np.abs(target - u.rho)))
        history.append(res)
        if res < tol:
            return GelfandSolution(u, _gelfand_exponent(u), res, it, history)
        u = u.with_rho((1 - damping) * u.rho + damping * target)
        if it > 50 and history[-1] > history[-50] * 0.999 and damping > 0.05:
            damping *= 0.5
    raise GelfandNonConvergence(f"no convergence after {max_iter} iterations, residual {history[-1]:.3e}", history)


def gelfand_map_residual(sol: GelfandSolution, M: float | None = None) -> float:
    """L1 gap between u and its (undamped) image under the fixed-point map."""
    u = sol.u
    M = u.mass if M is None else M
    expo = _gelfand_exponent(u)
    e = np.exp(expo - expo.max())
    img = M * e / np.dot(u.grid.weights, e)
    return float(np.dot(u.grid.weights, np.abs(img - u.rho)))


# ---------------------------------------------------------------------------
# blowup zoom

@dataclass
class ZoomReport:
    times: list
    L: list
    distances: list
    T_estimate: Optional[float]
    exponent: Optional[float]
    monotone: bool
    exponent_ok: bool
    flags: list = field(default_factory=list)
    note: str = "T from linear extrapolation of 1/rho_max(t) to zero (two-point Richardson on the last samples)"

    @property
    def passed(self) -> bool:
        return self.monotone and self.exponent_ok and not self.flags

    def to_dict(self) -> dict:
        return asdict(self)


def comparator_distance(rho: RadialDensity, y_max: float = 5.0, n: int = 400) -> tuple[float, float]:
    """(L, relative L1 distance on y <= y_max) between L^2 rho(L y) and 8/(1+y^2)^2."""
    L = sqrt(8.0 / rho.rho[0])
    y = np.linspace(0, y_max, n + 1)
    ym = 0.5 * (y[1:] + y[:-1])
    wts = 2 * pi * ym * np.diff(y)
    prof = L**2 * rho.value_at(L * ym)
    target = 8.0 / (1 + ym**2) ** 2
    return L, float(np.dot(wts, np.abs(prof - target)) / np.dot(wts, target))


def blowup_zoom(traj_or_states, n_last: int = 5, T: float | None = None,
                min_cells_per_L: float = 4.0) -> ZoomReport:
    """Compare late profiles to the rescaled steady shape and fit L ~ (T - t)^a."""
    states = traj_or_states.states if isinstance(traj_or_states, Trajectory) else list(traj_or_states)
    flags = []
    if len(states) < n_last:
        return ZoomReport([], [], [], None, None, False, False, ["too few samples"])
    late = states[-n_last:]
    times, Ls, dists = [], [], []
    for s in late:
        L, dist = comparator_distance(s.density)
        w0 = s.density.grid.nodes[1]
        if L / w0 < min_cells_per_L:
            flags.append("unresolved")
        times.append(s.t)
        Ls.append(L)
        dists.append(dist)
    t = np.array(times)
    if T is None:
        inv = 1.0 / np.array([s.density.rho_max for s in late])
        # linear extrapolation of 1/rho_max through the last two samples
        slope = (inv[-1] - inv[-2]) / (t[-1] - t[-2])
        T = float(t[-1] - inv[-1] / slope) if slope < 0 else None
    exponent = None
    if T is not None and np.all(T - t > 0):
        exponent = float(np.polyfit(np.log(T - t), np.log(Ls), 1)[0])
    monotone = bool(np.all(np.diff(dists) < 0))
    ok = exponent is not None and 0.4 <= exponent <= 0.6
    return ZoomReport(list(map(float, times)), list(map(float, Ls)), dists, T, exponent,
                      monotone, ok, sorted(set(flags)))

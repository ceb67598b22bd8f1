"""Minimizing-movement (JKO) scheme in radial Lagrangian coordinates.

A state is n rings of mass mu = M/n at sorted radii r_1 <= ... <= r_n.
The discrete energy is

    F(r) = sum_j m_j log(m_j / |A_j|) + (mu^2 / 4 pi) sum_k (2k - 1) log r_k,

where by default the cells A_j are the annuli between consecutive rings
(mass mu) plus the disk inside r_1 (mass mu/2), and the
second sum is the exact ring-ring logarithmic interaction (the angular
mean of log|x - y| over two rings is log max(r, s)).  With the monotone
coupling, W2^2 between two ring states is mu * sum (r_k - s_k)^2, so each
step minimizes

    Phi(r) = mu |r - s|^2 / (2 tau) + F(r)

over sorted radii by damped Newton with backtracking.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from math import pi
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, solveh_banded

from .density import QuantileProfile, RadialDensity

M_CRIT = 8 * pi


@dataclass
class JKOConfig:
    tau: float = 0.05
    n: int = 128
    tol: float = 1e-10            # per-particle gradient sup norm, relative to the force scale
    max_iter: int = 200
    entropy_rule: str = "gap"         # "gap" or "area", see ring_energy

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.n < 16:
            raise ValueError("need at least 16 particles")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.entropy_rule not in ("gap", "area"):
            raise ValueError(f"unknown entropy rule {self.entropy_rule!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class JKOStepReport:
    F_before: float
    F_after: float
    w2_sq: float
    el_residual: float
    iterations: int
    accepted: bool
    supercritical: bool = False
    grad_norm: float = 0.0

    def estimate_gap(self, tau: float) -> float:
        """F_before - F_after - W2^2 / (2 tau); nonnegative on accepted steps."""
        return self.F_before - self.F_after - self.w2_sq / (2 * tau)

    def to_dict(self) -> dict:
        return asdict(self)


class JKOStepRejected(RuntimeError):
    def __init__(self, message, report: JKOStepReport):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# discrete energy

def ring_energy(r: np.ndarray, M: float, derivatives: bool = False, rule: str = "gap"):
    """Discrete F_PKS of n equal rings; optionally gradient and banded Hessian.

    Entropy rules, with s = r^2:

    * ``gap``: mass mu between consecutive rings, mu/2 in the disk [0, r_1],
      and nothing assigned outside r_n (vacuum closure).  Pressure forces
      are then centred differences of the gap densities.
    * ``area``: one shell per ring, bounded by midpoints of s, the outer
      bound mirrored.

    The Hessian is returned in upper banded storage with two superdiagonals
    (``scipy.linalg.solveh_banded`` layout).
    """
    n = r.size
    mu = M / n
    sq = r**2
    k = np.arange(1, n + 1)
    if r[0] <= 0 or np.any(np.diff(sq) <= 0):
        return (np.inf, None, None) if derivatives else np.inf
    if rule == "gap":
        gaps = np.diff(sq)
        S = 0.5 * mu * np.log(0.5 * mu / (pi * sq[0])) + mu * np.sum(np.log(mu / (pi * gaps)))
    elif rule == "area":
        A = _shell_map(n) @ sq
        if np.any(A <= 0):
            return (np.inf, None, None) if derivatives else np.inf
        S = mu * np.sum(np.log(mu / (pi * A)))
    else:
        raise ValueError(f"unknown entropy rule {rule!r}")
    E = mu**2 / (4 * pi) * np.sum((2 * k - 1) * np.log(r))
    F = S + E
    if not derivatives:
        return F
    if rule == "gap":
        inv = mu / gaps
        gs = np.zeros(n)
        gs[:-1] += inv
        gs[1:] -= inv
        gs[0] -= 0.5 * mu / sq[0]
        q = mu / gaps**2
        d0 = np.zeros(n)
        d0[:-1] += q
        d0[1:] += q
        d0[0] += 0.5 * mu / sq[0] ** 2
        Hs = sparse.diags([-q, d0, -q], [-1, 0, 1], format="csr")
    else:
        D = _shell_map(n)
        gs = -mu * (D.T @ (1.0 / A))
        Hs = (D.T @ sparse.diags(mu / A**2) @ D).tocsr()
    # chain rule through s = r^2
    J = sparse.diags(2 * r)
    H = (J @ Hs @ J).tocsr() + sparse.diags(2 * gs)
    cE = mu**2 / (4 * pi) * (2 * k - 1)
    g = 2 * r * gs + cE / r
    band = np.zeros((3, n))
    band[2] = H.diagonal(0) - cE / r**2
    band[1, 1:] = H.diagonal(1)
    band[0, 2:] = H.diagonal(2)
    return F, g, band


@lru_cache(maxsize=16)
def _shell_map(n: int):
    """Sparse D with (D s)_k = b_k - b_{k-1} for midpoint bounds b in s, outer bound mirrored."""
    i = np.arange(n - 1)
    C = np.zeros((n, n))
    C[i, i] = 0.5
    C[i, i + 1] = 0.5
    C[n - 1, n - 1] = 1.5
    C[n - 1, n - 2] = -0.5
    Dm = C - np.vstack([np.zeros(n), C[:-1]])
    return sparse.csr_matrix(Dm)


def ring_density(p: QuantileProfile, rule: str = "gap") -> RadialDensity:
    return p.to_density(rule)


def reconstruct_density(p: QuantileProfile, grid) -> RadialDensity:
    """Cell averages on ``grid`` of a continuous piecewise-linear-in-r^2 density.

    Nodal values at the rings come from centred gap densities; the tail past
    r_n decays exponentially in r^2 and carries the remaining mass.  Used for comparisons
    against Eulerian solvers, where the piecewise-constant ring density
    would dominate the error.
    """
    if p.d != 2 or grid.d != 2:
        raise ValueError("reconstruction is implemented for d = 2")
    s, mu = p.radii**2, p.particle_mass
    nod = np.empty(p.n)
    nod[1:-1] = 2 * mu / (pi * (s[2:] - s[:-2]))
    nod[0] = 1.5 * mu / (pi * s[1])
    # last node: geometric extrapolation of the two outer gap densities
    g1, g2 = mu / (pi * (s[-1] - s[-2])), mu / (pi * (s[-2] - s[-3]))
    nod[-1] = g1 * np.sqrt(g1 / g2)
    S = np.concatenate([[0.0], s])
    R = np.concatenate([[nod[0]], nod])
    # pi * integral of the piecewise-linear function in s is exact by trapezoids
    cum = np.concatenate([[0.0], np.cumsum(0.5 * pi * (R[1:] + R[:-1]) * np.diff(S))])
    # exponential tail in s carrying whatever mass is left, so the total is exactly M
    left = max(p.M - cum[-1], 0.5 * mu)
    ell = left / (pi * nod[-1])

    def mass(x):
        x = np.maximum(x, 0.0)
        xi = np.minimum(x, S[-1])
        j = np.clip(np.searchsorted(S, xi, side="right") - 1, 0, S.size - 2)
        slope = (R[j + 1] - R[j]) / (S[j + 1] - S[j])
        dx = xi - S[j]
        inner = cum[j] + pi * (R[j] * dx + 0.5 * slope * dx**2)
        return inner + left * -np.expm1(-(x - xi) / ell)

    m = np.diff(mass(grid.nodes**2))
    return RadialDensity(grid, m / grid.weights)


# ---------------------------------------------------------------------------
# Euler-Lagrange residual

def probe_fields() -> dict[str, Callable]:
    """Smooth compactly supported radial vector fields zeta(r) e_r, zeta(0) = 0."""
    out = {}

    def bump(c, w):
        def z(r):
            x = (r - c) / w
            return np.where(np.abs(x) < 1, r * (1 - x**2) ** 3, 0.0)
        return z

    for L in (0.5, 1.0, 2.0, 4.0):
        out[f"core_{L}"] = bump(0.0, L)
    for c in (0.5, 1.0, 1.5, 2.5, 4.0):
        out[f"shell_{c}"] = bump(c, 0.75 * c)
    return out


def el_residual(prev: QuantileProfile, nxt: QuantileProfile, tau: float,
                fields: dict | None = None, rule: str = "gap") -> tuple[float, float]:
    """Weak Euler-Lagrange residual along T_eps = id + eps zeta.

    Returns (max_zeta |dPhi . zeta|, dictionary constant max_zeta mu sum |zeta(r_k)|).
    The directional derivative is the discrete gradient of the penalized
    energy dotted with zeta evaluated at the rings.
    """
    if prev.n != nxt.n:
        raise ValueError("profiles must have the same particle count")
    fields = probe_fields() if fields is None else fields
    mu = nxt.particle_mass
    r, s = nxt.radii, prev.radii
    _, g, _ = ring_energy(r, nxt.M, derivatives=True, rule=rule)
    g = g + mu * (r - s) / tau
    res, const = 0.0, 0.0
    for z in fields.values():
        zr = z(r)
        res = max(res, abs(float(np.dot(g, zr))))
        const = max(const, mu * float(np.sum(np.abs(zr))))
    return res, const


# ---------------------------------------------------------------------------
# one step

def _feasible(r):
    return r[0] > 0 and np.all(np.diff(r) > 0)


def _within_trust(cand, r):
    """No ring moves more than half of its distance to a neighbour (or to 0)."""
    room = np.minimum(np.concatenate([[r[0]], np.diff(r)]), np.concatenate([np.diff(r), [np.inf]]))
    return np.all(np.abs(cand - r) <= 0.5 * room)


def jko_step(p: QuantileProfile, config: JKOConfig) -> tuple[QuantileProfile, JKOStepReport]:
    """One minimizing-movement step from ``p``.

    Damped Newton on Phi with a banded Hessian shifted to be positive definite and
    Armijo backtracking restricted to sorted radii.  The step is accepted
    only if Phi(new) <= Phi(start) = F(start); that makes the energy estimate
    a certificate rather than an approximation.
    """
    tau, M = config.tau, p.M
    s = np.array(p.radii, dtype=float)
    if not _feasible(s):
        raise ValueError("radii must be positive and strictly increasing")
    mu = M / p.n
    rule = config.entropy_rule
    F0 = ring_energy(s, M, rule=rule)

    def phi(r, derivs=False):
        out = ring_energy(r, M, derivatives=derivs, rule=rule)
        pen = mu * np.sum((r - s) ** 2) / (2 * tau)
        if not derivs:
            return out + pen
        F, g, H = out
        H[2] += mu / tau
        return F + pen, g + mu * (r - s) / tau, H

    r = s.copy()
    val, g, H = phi(r, True)
    # forces per unit mass are O(M / r_1); the tolerance is relative to that scale
    kk = 2 * np.arange(1, p.n + 1) - 1
    gtol = config.tol * max(1.0, mu * float(np.max(kk / s)) / (4 * pi))
    it = 0
    for it in range(1, config.max_iter + 1):
        if np.max(np.abs(g)) / mu <= gtol:
            break
        shift = 0.0
        while True:
            Hs = H.copy()
            Hs[2] += shift
            try:
                d = -solveh_banded(Hs, g)
                break
            except LinAlgError:
                shift = max(2 * shift, 1e-8 * np.abs(H[2]).max())
        t = 1.0
        slope = float(np.dot(g, d))
        gnorm = np.max(np.abs(g))
        while t > 1e-12:
            cand = r + t * d
            if _within_trust(cand, r):
                v, gc, Hc = phi(cand, True)
                # near the minimum Phi stalls at round-off; accept a gradient decrease there
                flat = abs(v - val) <= 1e-13 * max(1.0, abs(val))
                if v <= val + 1e-4 * t * slope or (flat and np.max(np.abs(gc)) < gnorm):
                    break
            t *= 0.5
        else:
            break
        if np.max(np.abs(cand - r)) <= 1e-15 * r[-1]:
            r, val, g, H = cand, v, gc, Hc
            break
        r = cand
        val, g, H = v, gc, Hc
    F1 = ring_energy(r, M, rule=rule)
    w2 = mu * float(np.sum((r - s) ** 2))
    accepted = F1 + w2 / (2 * tau) <= F0
    new = QuantileProfile(r, M, p.d)
    res, _ = el_residual(p, new, tau, rule=rule)
    report = JKOStepReport(F0, F1, w2, res, it, bool(accepted), M > M_CRIT,
                           float(np.max(np.abs(g)) / mu))
    if not accepted:
        raise JKOStepRejected("inner solver did not decrease the penalized energy", report)
    return new, report


# ---------------------------------------------------------------------------
# runs

@dataclass
class JKOTrajectory:
    profiles: list
    reports: list
    config: JKOConfig
    times: list = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.reports[0].F_before] + [r.F_after for r in self.reports]) \
            if self.reports else np.array([])

    @property
    def total_square(self) -> float:
        """sum_k W2^2(rho^k, rho^{k+1}) / (2 tau)."""
        return sum(r.w2_sq for r in self.reports) / (2 * self.config.tau)

    def total_square_gap(self) -> float:
        """(F0 - inf_k F_k) - total square; >= 0 when the estimate holds."""
        F = self.energies
        return float(F[0] - F.min() - self.total_square)

    def at(self, t: float) -> QuantileProfile:
        """Displacement interpolation between the two bracketing steps."""
        tau = self.config.tau
        k = int(np.clip(np.floor(t / tau), 0, len(self.profiles) - 2))
        th = (t - k * tau) / tau
        a, b = self.profiles[k], self.profiles[k + 1]
        return QuantileProfile((1 - th) * a.radii + th * b.radii, a.M, a.d)

    @property
    def final(self) -> QuantileProfile:
        return self.profiles[-1]


def jko_run(p0: QuantileProfile | RadialDensity, T_end: float, config: JKOConfig) -> JKOTrajectory:
    if isinstance(p0, RadialDensity):
        p0 = QuantileProfile.from_density(p0, config.n)
    n_steps = int(round(T_end / config.tau))
    profiles, reports, times = [p0], [], [0.0]
    p = p0
    for k in range(n_steps):
        p, rep = jko_step(p, config)
        profiles.append(p)
        reports.append(rep)
        times.append((k + 1) * config.tau)
    return JKOTrajectory(profiles, reports, config, times)


def weak_rate_defect(p0: QuantileProfile, p1: QuantileProfile, tau: float,
                     phi: Callable, dphi: Callable, d2phi: Callable, rule: str = "gap") -> float:
    """[int phi rho^1 - int phi rho^0]/tau minus the weak PDE right-hand side at rho^1.

    For radial phi, d/dt int phi rho = int (phi'' + phi'/r) rho + int rho c_r phi'.
    On rings c_r(r_k) = -mu (k - 1/2) / (2 pi r_k), the mass inside ring k
    counting half of the ring itself.
    """
    mu = p1.particle_mass
    r = p1.radii
    lhs = mu * (np.sum(phi(p1.radii)) - np.sum(phi(p0.radii))) / tau
    # diffusion term through the reconstructed density
    rho = p1.to_density(rule)
    pts, wts = rho.grid.gauss_points(8)
    lap = d2phi(pts) + dphi(pts) / pts
    diff = float(np.sum(rho.rho[:, None] * lap * 2 * pi * pts * wts))
    k = np.arange(1, p1.n + 1)
    drift = -mu**2 / (4 * pi) * float(np.sum((2 * k - 1) * dphi(r) / r))
    return lhs - (diff + drift)

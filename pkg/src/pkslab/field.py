"""Radial chemoattractant / Newtonian potential via the Gauss reduction.

For radial data the angular mean of the kernel is a function of
max(|x|, |y|) only (log in d = 2, power 2 - d otherwise), which turns the
nonlocal field into cumulative-mass integrals.
"""

from __future__ import annotations

from math import pi
from typing import NamedTuple

import numpy as np

from .density import RadialDensity
from .grid import RadialGrid, sphere_area, leggauss


def newton_constant(d: int) -> float:
    """c_d = 1 / ((d - 2) sigma_d), so K = c_d |x|^{2-d} solves -Delta K = delta."""
    return 1.0 / ((d - 2) * sphere_area(d))


def _kernel_profile(r, d: int):
    """Angular-mean kernel k(max) with c = int k(max(r, s)) dm(s)."""
    if d == 2:
        return -np.log(r) / (2 * pi)
    return newton_constant(d) * r ** (2.0 - d)


class Field(NamedTuple):
    r: np.ndarray
    c: np.ndarray
    c_r: np.ndarray


def field_derivative(rho: RadialDensity, r=None) -> np.ndarray:
    """c_r = -m(r) / (sigma_d r^{d-1}), with the limit 0 at the origin."""
    if r is None:
        r = rho.grid.nodes
    r = np.asarray(r, dtype=float)
    m = rho.mass_inside(r)
    sigma = rho.grid.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, -m / (sigma * np.where(r > 0, r, 1.0) ** (rho.d - 1)), 0.0)
    return out


def _outer_integral(rho: RadialDensity, order: int = 8) -> np.ndarray:
    """Per node: int_{s > r_i} k(s) dm(s), for the nodes r_i."""
    pts, wts = rho.grid.gauss_points(order)
    k = _kernel_profile(np.where(pts > 0, pts, 1e-300), rho.d)
    cell = rho.rho * (k * wts * rho.grid.sigma * pts ** (rho.d - 1)).sum(axis=1)
    tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
    return tail


def chemoattractant_field(rho: RadialDensity, r=None) -> Field:
    """Potential c = G * rho and its radial derivative.

    d = 2 uses G = -log|x| / 2 pi; d >= 3 uses K = c_d |x|^{2-d}.  Values
    are returned at the grid nodes unless ``r`` is given.
    """
    grid = rho.grid
    if r is None:
        r = grid.nodes
        outer = _outer_integral(rho)
        m = rho.cum_mass
    else:
        r = np.asarray(r, dtype=float)
        outer_nodes = _outer_integral(rho)
        i = np.clip(np.searchsorted(grid.nodes, r, side="right") - 1, 0, grid.n_cells - 1)
        # remove the part of cell i lying inside r
        outer = outer_nodes[i + 1] + _partial_cell(rho, i, r)
        m = rho.mass_inside(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(r > 0, _kernel_profile(np.where(r > 0, r, 1.0), rho.d), 0.0)
    c = m * k + outer
    if rho.d > 2:
        c = np.where(r > 0, c, outer)
    return Field(r, c, field_derivative(rho, r))


def _partial_cell(rho: RadialDensity, i, r, order: int = 8):
    """int_{r}^{r_{i+1}} k(s) dm(s) within cell i."""
    x, w = leggauss(order)
    b = rho.grid.nodes[i + 1]
    a = np.asarray(r)
    h = (b - a)[..., None]
    s = a[..., None] + 0.5 * h * (x + 1)
    ws = 0.5 * h * w
    k = _kernel_profile(np.where(s > 0, s, 1e-300), rho.d)
    return rho.rho[i] * (k * ws * rho.grid.sigma * s ** (rho.d - 1)).sum(axis=-1)


def potential_increments(rho: RadialDensity) -> np.ndarray:
    """c(rc_i) - c(rc_{i-1}) between consecutive cell centers, exactly.

    Uses int m(r) / (sigma r^{d-1}) dr with the piecewise-quadratic (d = 2)
    or piecewise-polynomial cumulative mass; no large cancellations.
    """
    g = rho.grid
    r = g.nodes
    rc = g.centers
    d = rho.d
    sigma = g.sigma
    A = rho.cum_mass[:-1] - rho.rho * sigma / d * r[:-1] ** d  # m(r) = A + rho sigma r^d / d in cell

    def cell_int(i, a, b):
        # int_a^b m(r) / (sigma r^{d-1}) dr inside cell i
        if d == 2:
            la = np.log(np.where(a > 0, b / np.where(a > 0, a, 1.0), 1.0))
            return A[i] / sigma * la + rho.rho[i] * (b**2 - a**2) / (2 * d)
        with np.errstate(divide="ignore"):
            p = (b ** (2.0 - d) - a ** (2.0 - d)) / (2.0 - d)
        return A[i] / sigma * p + rho.rho[i] * (b**2 - a**2) / (2 * d)

    i = np.arange(1, g.n_cells)
    inner = cell_int(i - 1, rc[i - 1], r[i])
    outer = cell_int(i, r[i], rc[i])
    return -(inner + outer)


def interaction_integral(rho: RadialDensity, order: int = 8) -> float:
    """iint k(max(|x|,|y|)) rho rho, i.e. iint G(x-y) rho(x) rho(y) dx dy.

    O(N): equals 2 int k(r) m(r) dm(r) with m piecewise polynomial in each cell.
    """
    g = rho.grid
    pts, wts = g.gauss_points(order)
    d = rho.d
    A = rho.cum_mass[:-1] - rho.rho * g.sigma / d * g.nodes[:-1] ** d
    m = A[:, None] + rho.rho[:, None] * g.sigma / d * pts**d
    k = _kernel_profile(np.where(pts > 0, pts, 1e-300), d)
    dm = rho.rho[:, None] * g.sigma * pts ** (d - 1) * wts
    return float(2.0 * np.sum(k * m * dm))


def interaction_integral_direct(rho: RadialDensity, order: int = 4) -> float:
    """O(N^2) oracle: pairwise double quadrature of the angular-mean kernel.

    Off-diagonal cell pairs use tensor Gauss points; each diagonal block is
    split along r = s and reduced to a 1D integral.
    """
    g = rho.grid
    d = rho.d
    pts, wts = g.gauss_points(order)
    dmass = rho.rho[:, None] * g.sigma * pts ** (d - 1) * wts
    x = pts.ravel()
    w = dmass.ravel()
    cell = np.repeat(np.arange(g.n_cells), order)
    kmat = _kernel_profile(np.maximum.outer(x, x), d)
    same = cell[:, None] == cell[None, :]
    off = float(w @ np.where(same, 0.0, kmat) @ w)
    # diagonal: 2 int_cell k(r) [mass of the cell inside r] dm(r)
    inner_mass = rho.rho[:, None] * g.sigma / d * (pts**d - g.nodes[:-1, None] ** d)
    diag = float(2.0 * np.sum(_kernel_profile(pts, d) * inner_mass * dmass))
    return off + diag


def regularized_drift_matrix(grid: RadialGrid, eps: float, n_theta: int = 256, order: int = 4) -> np.ndarray:
    """Matrix A with c_r(r_j) = sum_i A[j, i] rho_i for G_eps = -log(|x| + eps) / 2 pi.

    The angular average of d/dr log(|x - y| + eps) has no closed form; it is
    integrated with a midpoint rule in theta and Gauss points in s.
    """
    if grid.d != 2:
        raise ValueError("regularized kernel is defined in d = 2")
    r = grid.nodes[:, None, None]
    pts, wts = grid.gauss_points(order)
    s = pts[None, :, :]
    theta = (np.arange(n_theta) + 0.5) * pi / n_theta
    out = np.zeros((grid.nodes.size, grid.n_cells))
    cos = np.cos(theta)
    for t, ct in enumerate(cos):
        dist = np.sqrt(np.maximum(r**2 + s**2 - 2 * r * s * ct, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            dk = np.where(dist > 0, (r - s * ct) / (dist * (dist + eps)), 0.0)
        out += (dk * wts[None] * 2 * pi * s).sum(axis=2)
    out *= -1.0 / (2 * pi) / n_theta
    return out


def log_averaged_potential(rho: RadialDensity, confinement: float = 0.0, order: int = 4,
                           inner: int = 8) -> np.ndarray:
    """Cell values psi_i = log <exp(c - confinement r^2 / 2)>_i, up to a constant (d = 2).

    The cumulative mass inside each cell is reconstructed as a cubic Hermite
    polynomial in s = r^2 (nodal slopes pi rho interpolated between cell
    means), so c is third-order accurate within cells.  Averaging exp(psi)
    rather than sampling psi at centres makes rho ~ exp(psi) an equilibrium
    in terms of cell averages.
    """
    if rho.d != 2:
        raise ValueError("log-averaged potential is implemented for d = 2")
    g = rho.grid
    s = g.nodes**2
    ds = np.diff(s)
    m = rho.cum_mass
    sc = 0.5 * (s[1:] + s[:-1])
    slope = np.empty_like(s)
    slope[0] = pi * rho.rho[0]
    slope[-1] = pi * rho.rho[-1]
    th = (s[1:-1] - sc[:-1]) / (sc[1:] - sc[:-1])
    slope[1:-1] = pi * ((1 - th) * rho.rho[:-1] + th * rho.rho[1:])
    a = s[:-1] / ds

    def herm(t):
        t2, t3 = t * t, t * t * t
        return ((2 * t3 - 3 * t2 + 1) * m[:-1, None] + (t3 - 2 * t2 + t) * (ds * slope[:-1])[:, None]
                + (-2 * t3 + 3 * t2) * m[1:, None] + (t3 - t2) * (ds * slope[1:])[:, None])

    uq, wq = leggauss(inner)
    uq, wq = 0.5 * (uq + 1), 0.5 * wq
    tg, wg = leggauss(order)
    tg, wg = 0.5 * (tg + 1), 0.5 * wg
    # c(t) - c(node_i) = -(1/4 pi) int_0^t H / (a + tau) dtau
    tt = (tg[:, None] * uq[None, :]).ravel()
    vals = herm(tt) / (a[:, None] + tt[None, :])
    inner_int = (vals.reshape(-1, order, inner) * wq).sum(axis=2) * tg[None, :]
    full = (herm(uq) / (a[:, None] + uq[None, :]) * wq).sum(axis=1)
    c_local = -inner_int / (4 * pi) - 0.5 * confinement * ds[:, None] * (a[:, None] + tg[None, :])
    top = c_local.max(axis=1)
    ell = top + np.log((np.exp(c_local - top[:, None]) * wg).sum(axis=1))
    node_c = np.concatenate([[0.0], np.cumsum(-full / (4 * pi))])
    return node_c[:-1] + ell

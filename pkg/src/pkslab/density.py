"""Radial densities, mass-quantile profiles and their basic integrals."""

from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Callable, NamedTuple

import numpy as np

from .grid import RadialGrid, graded_grid

EMPTY = 1e-300


class TruncationError(ValueError):
    """Raised when a profile carries more mass beyond R_max than allowed."""

    def __init__(self, message: str, tail_mass: float):
        super().__init__(message)
        self.tail_mass = tail_mass


@dataclass(frozen=True)
class ModelParams:
    d: int = 2
    m: float = 1.0
    M: float = 8 * pi

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.d == 2 and self.m != 1.0:
            raise ValueError("d = 2 uses linear diffusion (m = 1)")
        if self.d >= 3 and not self.m > 1.0:
            raise ValueError("d >= 3 needs a porous-medium exponent m > 1")
        if not (np.isfinite(self.M) and self.M > 0):
            raise ValueError("mass must be positive and finite")


class RadialDensity:
    """Piecewise-constant radial density on a :class:`RadialGrid`.

    ``rho[i]`` is the value on the shell [r_i, r_{i+1}]; ``cum_mass[i]`` is
    the mass inside r_i, so ``cum_mass`` has one more entry than ``rho``.
    """

    __slots__ = ("grid", "rho", "cum_mass", "tail_mass")

    def __init__(self, grid: RadialGrid, rho, tail_mass: float = 0.0):
        rho = np.array(rho, dtype=float)
        if rho.shape != (grid.n_cells,):
            raise ValueError(f"expected {grid.n_cells} cell values, got {rho.shape}")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ValueError("density values must be finite and nonnegative")
        rho.setflags(write=False)
        cm = np.concatenate([[0.0], np.cumsum(grid.weights * rho)])
        cm.setflags(write=False)
        self.grid = grid
        self.rho = rho
        self.cum_mass = cm
        self.tail_mass = float(tail_mass)

    @classmethod
    def from_cum_mass(cls, grid: RadialGrid, cum_mass, tail_mass: float = 0.0) -> "RadialDensity":
        cm = np.asarray(cum_mass, dtype=float)
        inc = np.diff(cm)
        if np.any(inc < -1e-14 * max(cm[-1], 1.0)):
            raise ValueError("cumulative mass must be nondecreasing")
        return cls(grid, np.maximum(inc, 0.0) / grid.weights, tail_mass)

    @classmethod
    def from_function(cls, grid: RadialGrid, f: Callable, order: int = 8) -> "RadialDensity":
        """Cell averages of f(r) by Gauss-Legendre quadrature."""
        pts, wts = grid.gauss_points(order)
        w = wts * grid.sigma * pts ** (grid.d - 1)
        vals = np.asarray(f(pts), dtype=float)
        return cls(grid, np.maximum((vals * w).sum(axis=1), 0.0) / grid.weights)

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def mass(self) -> float:
        return float(self.cum_mass[-1])

    @property
    def rho_max(self) -> float:
        return float(self.rho.max()) if self.rho.size else 0.0

    def with_rho(self, rho) -> "RadialDensity":
        return RadialDensity(self.grid, rho, self.tail_mass)

    def scaled(self, factor: float) -> "RadialDensity":
        return RadialDensity(self.grid, self.rho * factor, self.tail_mass * factor)

    def mass_inside(self, r) -> np.ndarray:
        """Cumulative mass at arbitrary radii (exact for piecewise constants)."""
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.grid.R_max)
        nodes = self.grid.nodes
        i = np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, self.grid.n_cells - 1)
        d = self.d
        return self.cum_mass[i] + self.rho[i] * self.grid.sigma / d * (r**d - nodes[i] ** d)

    def value_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        i = np.searchsorted(self.grid.nodes, r, side="right") - 1
        out = np.where((i >= 0) & (i < self.grid.n_cells), self.rho[np.clip(i, 0, self.grid.n_cells - 1)], 0.0)
        return out

    def quantile_radius(self, q) -> np.ndarray:
        """Radius enclosing mass q (inverse of ``mass_inside``)."""
        q = np.clip(np.asarray(q, dtype=float), 0.0, self.mass)
        cm = self.cum_mass
        i = np.clip(np.searchsorted(cm, q, side="left") - 1, 0, self.grid.n_cells - 1)
        nodes = self.grid.nodes
        d = self.d
        rho = self.rho[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = nodes[i] ** d + d * (q - cm[i]) / (self.grid.sigma * rho)
            r = np.where(rho > 0, inner ** (1.0 / d), nodes[i])
        return np.clip(r, nodes[i], nodes[i + 1])

    def __repr__(self):
        return f"RadialDensity(d={self.d}, n={self.grid.n_cells}, R_max={self.grid.R_max:g}, mass={self.mass:.6g})"


class QuantileProfile:
    """Equal-mass Lagrangian representation: n rings of mass M/n at sorted radii."""

    __slots__ = ("radii", "M", "d")

    def __init__(self, radii, M: float, d: int = 2):
        r = np.array(radii, dtype=float)
        if r.ndim != 1 or r.size < 1:
            raise ValueError("need at least one radius")
        if np.any(r < 0) or np.any(np.diff(r) < 0):
            raise ValueError("quantile radii must be nonnegative and sorted")
        r.setflags(write=False)
        self.radii = r
        self.M = float(M)
        self.d = d

    @property
    def n(self) -> int:
        return self.radii.size

    @property
    def particle_mass(self) -> float:
        return self.M / self.n

    @property
    def mass(self) -> float:
        return self.particle_mass * self.n

    @classmethod
    def from_density(cls, rho: RadialDensity, n: int) -> "QuantileProfile":
        q = (np.arange(n) + 0.5) / n * rho.mass
        return cls(rho.quantile_radius(q), rho.mass, rho.d)

    def shell_bounds(self, rule: str = "area") -> np.ndarray:
        """Shell boundaries b_0 = 0 < b_1 < ... < b_n used to rebuild a density.

        ``rule="area"`` puts interior boundaries at the midpoints of r^2
        (exact for a uniform disk); ``rule="radius"`` at midpoints of r.
        The outer boundary mirrors the last interior gap in the same variable.
        """
        if rule == "area":
            x = self.radii**2
        elif rule == "radius":
            x = self.radii
        else:
            raise ValueError(f"unknown shell rule {rule!r}")
        b = np.empty(self.n + 1)
        b[0] = 0.0
        b[1:-1] = 0.5 * (x[1:] + x[:-1])
        b[-1] = 2.0 * x[-1] - b[-2] if self.n > 1 else 2.0 * x[-1]
        return np.sqrt(b) if rule == "area" else b

    def to_density(self, rule: str = "gap") -> RadialDensity:
        """Piecewise-constant density; ``gap`` puts mass between consecutive rings."""
        mu = self.particle_mass
        if rule == "gap":
            s = self.radii**2
            tail = 2 * s[-1] - s[-2] if self.n > 1 else 2 * s[-1]
            b = np.sqrt(np.concatenate([[0.0], s, [tail]]))
            m = np.full(self.n + 1, mu)
            m[0] = m[-1] = 0.5 * mu
        else:
            b = self.shell_bounds(rule)
            m = np.full(self.n, mu)
        grid = RadialGrid(b, self.d, {"kind": "quantile", "n": self.n, "rule": rule})
        return RadialDensity(grid, m / grid.weights)

    def __repr__(self):
        return f"QuantileProfile(n={self.n}, M={self.M:.6g})"


# ---------------------------------------------------------------------------
# constructors

def steady_value(r, lam: float, M: float):
    return M / pi * lam / (lam + np.asarray(r) ** 2) ** 2


def steady_cum_mass(r, lam: float, M: float):
    r2 = np.asarray(r) ** 2
    return M * r2 / (lam + r2)


def make_steady_profile(lam: float, M: float, grid: RadialGrid | None = None,
                        tail_tol: float = 1e-6) -> RadialDensity:
    """Cell averages of the log-HLS minimizer (M/pi) lam / (lam + r^2)^2.

    ``tail_tol`` bounds the relative mass lost beyond R_max; a larger tail
    raises :class:`TruncationError` carrying the measured tail.
    """
    if lam <= 0 or M <= 0:
        raise ValueError("need lam > 0 and M > 0")
    if grid is None:
        grid = graded_grid(2000, 1e4 * np.sqrt(lam), np.sqrt(lam) / 4)
    if grid.d != 2:
        raise ValueError("steady profiles live in d = 2")
    cm = steady_cum_mass(grid.nodes, lam, M)
    tail = M - cm[-1]
    if tail > tail_tol * M:
        raise TruncationError(f"tail mass {tail:.3e} beyond R_max exceeds {tail_tol:g}*M", tail)
    return RadialDensity.from_cum_mass(grid, cm, tail_mass=tail)


def gaussian_profile(M: float, sigma: float, grid: RadialGrid) -> RadialDensity:
    """Normalized Gaussian of variance-scale sigma carrying mass M (any d)."""
    d = grid.d
    norm = M / (2 * pi * sigma**2) ** (d / 2)
    rho = RadialDensity.from_function(grid, lambda r: norm * np.exp(-r**2 / (2 * sigma**2)))
    return rho.scaled(M / rho.mass)


def ring_profile(M: float, r0: float, sigma: float, grid: RadialGrid) -> RadialDensity:
    rho = RadialDensity.from_function(grid, lambda r: np.exp(-(r - r0) ** 2 / (2 * sigma**2)))
    return rho.scaled(M / rho.mass)


# ---------------------------------------------------------------------------
# integrals

class Moments(NamedTuple):
    mass: float
    second_moment: float
    entropy: float
    second_moment_divergent: bool
    second_moment_truncated: float


def tail_diverges(contrib: np.ndarray, grid: RadialGrid, ratio: float = 0.5, rtol: float = 1e-9) -> bool:
    """Flag a divergent integral from its per-cell contributions.

    Compares the outermost half-decade of radii with the half-decade before
    it; a convergent tail decays, a divergent one (flat per unit log r or
    growing) does not.
    """
    R = grid.R_max
    rc = grid.centers
    s = np.sqrt(10.0)
    last = contrib[rc >= R / s].sum()
    prev = contrib[(rc >= R / 10) & (rc < R / s)].sum()
    total = np.abs(contrib).sum()
    if total == 0 or not np.any(rc < R / 10):
        return False
    return bool(abs(last) > rtol * total and abs(last) >= ratio * abs(prev))


def entropy(rho: RadialDensity) -> float:
    r = rho.rho
    safe = np.where(r > EMPTY, r, 1.0)
    return float(np.sum(rho.grid.weights * np.where(r > EMPTY, r * np.log(safe), 0.0)))


def second_moment(rho: RadialDensity) -> float:
    return float(np.dot(rho.grid.moment_weights(2), rho.rho))


def moments_and_entropy(rho: RadialDensity) -> Moments:
    contrib = rho.grid.moment_weights(2) * rho.rho
    v = float(contrib.sum())
    div = tail_diverges(contrib, rho.grid)
    return Moments(rho.mass, np.inf if div else v, entropy(rho), div, v)


def lp_norm_power(rho: RadialDensity, p: float) -> float:
    """int rho^p."""
    return float(np.dot(rho.grid.weights, rho.rho**p))


def dilate(rho: RadialDensity, lam: float) -> RadialDensity:
    """Mass-preserving dilation.

    d = 2: rho_lam(x) = lam^-2 rho(x / lam), support stretched by lam.
    d >= 3: h_lam(x) = lam^d h(lam x), support shrunk by lam.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = rho.d
    if d == 2:
        return RadialDensity(rho.grid.scaled(lam), rho.rho / lam**2, rho.tail_mass)
    return RadialDensity(rho.grid.scaled(1.0 / lam), rho.rho * lam**d, rho.tail_mass)


def l1_distance(a: RadialDensity, b: RadialDensity) -> float:
    """Exact L1 distance between two piecewise-constant radial densities."""
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    nodes = np.union1d(a.grid.nodes, b.grid.nodes)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    diff = np.abs(a.value_at(mid) - b.value_at(mid))
    sigma = a.grid.sigma
    w = sigma / a.d * np.diff(nodes**a.d)
    return float(np.dot(w, diff))


def resample(rho: RadialDensity, grid: RadialGrid) -> RadialDensity:
    """Conservative transfer onto another grid via the cumulative mass."""
    return RadialDensity.from_cum_mass(grid, rho.mass_inside(grid.nodes))

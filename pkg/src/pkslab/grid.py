"""Radial grids: node radii, shell volumes and quadrature helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi

import numpy as np


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * pi ** (d / 2) / gamma(d / 2)


def ball_volume(R: float, d: int) -> float:
    return sphere_area(d) / d * R**d


@lru_cache(maxsize=None)
def leggauss(order: int):
    """Read-only Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Shells [r_i, r_{i+1}] of a radial grid in dimension ``d``.

    ``spec`` is a free-form record of how the nodes were built; it is only
    used for serialization.
    """

    nodes: np.ndarray
    d: int = 2
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("grid needs at least two nodes")
        if r[0] != 0.0:
            raise ValueError("first node must be the origin")
        if np.any(np.diff(r) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)
        sigma = sphere_area(self.d)
        w = sigma / self.d * np.diff(r**self.d)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_gauss", {})

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def R_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def centers(self) -> np.ndarray:
        r = self.nodes
        return 0.5 * (r[1:] + r[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def moment_weights(self, k: float) -> np.ndarray:
        """Exact shell integrals of |x|^k, i.e. sigma_d * int r^{k+d-1} dr."""
        p = k + self.d
        return self.sigma / p * np.diff(self.nodes**p)

    def gauss_points(self, order: int = 8):
        """Gauss-Legendre nodes/weights per cell for int f(r) dr.

        Returns arrays of shape (n_cells, order).
        """
        if order in self._gauss:
            return self._gauss[order]
        x, w = leggauss(order)
        a = self.nodes[:-1, None]
        h = self.widths[:, None]
        pts = a + 0.5 * h * (x[None, :] + 1.0)
        wts = 0.5 * h * w[None, :]
        pts.setflags(write=False)
        wts.setflags(write=False)
        self._gauss[order] = (pts, wts)
        return pts, wts

    def scaled(self, factor: float) -> "RadialGrid":
        spec = dict(self.spec)
        spec["scaled_by"] = spec.get("scaled_by", 1.0) * factor
        return RadialGrid(self.nodes * factor, self.d, spec)

    def to_dict(self) -> dict:
        return {"d": self.d, "n_cells": self.n_cells, "R_max": self.R_max, **self.spec}


def graded_grid(n: int, R_max: float, core: float = 1.0, d: int = 2) -> RadialGrid:
    """Nodes r(s) = core * sinh(g s), s uniform on [0, 1].

    Spacing is close to uniform (core*g/n) for r << core and geometric
    (ratio exp(g/n)) for r >> core.
    """
    if R_max <= 0 or core <= 0 or n < 2:
        raise ValueError("need n >= 2, R_max > 0, core > 0")
    g = np.arcsinh(R_max / core)
    s = np.linspace(0.0, 1.0, n + 1)
    r = core * np.sinh(g * s)
    r[-1] = R_max
    return RadialGrid(r, d, {"kind": "graded", "n": n, "R_max": R_max, "core": core})


def uniform_grid(n: int, R_max: float, d: int = 2) -> RadialGrid:
    r = np.linspace(0.0, R_max, n + 1)
    return RadialGrid(r, d, {"kind": "uniform", "n": n, "R_max": R_max})


def support_grid(R: float, n_inner: int, R_max: float, n_outer: int, d: int = 3) -> RadialGrid:
    """Uniform nodes on [0, R] followed by geometric nodes out to R_max.

    ``R`` is an exact node so compactly supported profiles are represented
    without a partially filled cell.
    """
    inner = np.linspace(0.0, R, n_inner + 1)
    if R_max <= R or n_outer == 0:
        nodes = inner
    else:
        h = R / n_inner
        # geometric continuation whose first step matches the inner spacing
        q = _geometric_ratio(h, R_max - R, n_outer)
        steps = h * q ** np.arange(n_outer)
        outer = R + np.cumsum(steps)
        outer[-1] = R_max
        nodes = np.concatenate([inner, outer])
    spec = {"kind": "support", "R": R, "n_inner": n_inner, "R_max": float(nodes[-1]), "n_outer": n_outer}
    return RadialGrid(nodes, d, spec)


def _geometric_ratio(h: float, length: float, n: int) -> float:
    if h * n >= length:
        return 1.0
    lo, hi = 1.0, 2.0
    while h * (hi**n - 1) / (hi - 1) < length:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h * (mid**n - 1) / (mid - 1) < length:
            lo = mid
        else:
            hi = mid
    return hi


def grid_from_spec(spec: dict, d: int = 2) -> RadialGrid:
    kind = spec.get("kind", "graded")
    if kind == "graded":
        return graded_grid(int(spec["n"]), float(spec["R_max"]), float(spec.get("core", 1.0)), d)
    if kind == "uniform":
        return uniform_grid(int(spec["n"]), float(spec["R_max"]), d)
    if kind == "support":
        return support_grid(float(spec["R"]), int(spec["n_inner"]), float(spec["R_max"]), int(spec["n_outer"]), d)
    raise ValueError(f"unknown grid kind {kind!r}")

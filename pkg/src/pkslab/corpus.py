"""Seeded corpus of radial test densities for the inequality checks.

Two families:

* ``mixture``: convex combinations of dilated steady profiles and Gaussians
  (two or three components with well separated scales, so no member sits
  on an equality case).  Their relative entropy is infinite.
* ``perturbed``: rho_bar_lam + eps * M * (G_a - G_b), a zero-mass compact
  perturbation of a steady profile.  Same tail as rho_bar_lam, finite H_lam.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .density import RadialDensity, steady_cum_mass
from .grid import RadialGrid, graded_grid

MASSES = (2 * pi, 4 * pi, 8 * pi, 8 * pi, 12 * pi)


@dataclass
class CorpusMember:
    name: str
    kind: str
    M: float
    lam: float                 # steady profile used for H_lam and the moment bound
    params: dict = field(default_factory=dict)
    density: RadialDensity | None = None


def default_corpus_grid() -> RadialGrid:
    return graded_grid(2000, 1e4, 0.1)


def _gauss_cum(r, s):
    return 1.0 - np.exp(-np.asarray(r) ** 2 / (2 * s**2))


def _mixture(rng, grid, idx):
    M = float(rng.choice(MASSES))
    k = int(rng.integers(2, 4))
    while True:
        w = rng.dirichlet(np.ones(k))
        if w.min() >= 0.15:
            break
    # log-spaced scales spanning at least a factor 2 between extremes
    base = rng.uniform(np.log(0.4), np.log(1.2))
    logs = np.sort(base + rng.uniform(0, np.log(6.0), size=k))
    logs[-1] = max(logs[-1], logs[0] + np.log(2.0))
    scales = np.exp(logs)
    kinds = rng.choice(["bar", "gauss"], size=k)
    cm = np.zeros_like(grid.nodes)
    tail = 0.0
    comps = []
    for wi, si, ki in zip(w, scales, kinds):
        if ki == "bar":
            lam_i = float(si**2)
            c = steady_cum_mass(grid.nodes, lam_i, wi * M)
            tail += wi * M - c[-1]
        else:
            c = wi * M * _gauss_cum(grid.nodes, si)
        cm += c
        comps.append({"kind": str(ki), "weight": float(wi), "scale": float(si)})
    rho = RadialDensity.from_cum_mass(grid, cm, tail_mass=tail)
    return CorpusMember(f"mixture_{idx:03d}", "mixture", M, 1.0, {"components": comps}, rho)


def _perturbed(rng, grid, idx):
    M = float(rng.choice(MASSES))
    lam = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
    a = float(np.sqrt(lam) * np.exp(rng.uniform(np.log(0.3), np.log(1.0))))
    b = float(a * np.exp(rng.uniform(np.log(2.0), np.log(4.0))))
    if rng.random() < 0.5:
        a, b = b, a              # sign of the perturbation
    # largest eps keeping rho_bar - eps M G_b >= 0, with G_b of unit mass
    r = np.linspace(0, 12 * max(a, b), 4000)
    bar = M / pi * lam / (lam + r**2) ** 2
    log_ratio = np.log(bar / M * 2 * pi * b**2) + r**2 / (2 * b**2)
    eps_max = float(np.exp(log_ratio.min()))
    eps = float(rng.uniform(0.3, 0.8) * min(eps_max, 1.0))
    cm = (steady_cum_mass(grid.nodes, lam, M)
          + eps * M * (_gauss_cum(grid.nodes, a) - _gauss_cum(grid.nodes, b)))
    cm[0] = 0.0
    cm = np.maximum.accumulate(cm)
    rho = RadialDensity.from_cum_mass(grid, cm, tail_mass=M - steady_cum_mass(grid.R_max, lam, M))
    return CorpusMember(f"perturbed_{idx:03d}", "perturbed", M, lam,
                        {"a": a, "b": b, "eps": eps}, rho)


def generate_corpus(n: int = 240, seed: int = 20240611, grid: RadialGrid | None = None,
                    perturbed_fraction: float = 0.4) -> list[CorpusMember]:
    """Deterministic given ``seed``; members alternate families in a fixed pattern."""
    if grid is None:
        grid = default_corpus_grid()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if rng.random() < perturbed_fraction:
            out.append(_perturbed(rng, grid, i))
        else:
            out.append(_mixture(rng, grid, i))
    return out

"""Free energies, the relative entropy H_lambda and its dissipation D."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from math import pi, sqrt
from typing import Optional

import numpy as np

from .density import (RadialDensity, entropy, lp_norm_power, second_moment,
                      steady_cum_mass, tail_diverges)
from .field import interaction_integral


def hls_constant(M: float) -> float:
    """C(M) = M (1 + log pi - log M)."""
    return M * (1.0 + np.log(pi) - np.log(M))


def interaction_energy(rho: RadialDensity) -> float:
    """-1/2 int rho c (d = 2) or -1/2 iint K rho rho (d >= 3)."""
    return -0.5 * interaction_integral(rho)


def free_energy_pks(rho: RadialDensity) -> float:
    if rho.d != 2:
        raise ValueError("F_PKS is the d = 2 functional")
    return entropy(rho) + interaction_energy(rho)


def free_energy_rescaled(rho: RadialDensity) -> float:
    return free_energy_pks(rho) + 0.5 * second_moment(rho)


def free_energy_G(rho: RadialDensity, m: float) -> float:
    """int rho^m / (m - 1) - 1/2 iint K(x - y) rho rho."""
    if rho.d < 3 or m <= 1:
        raise ValueError("G needs d >= 3 and m > 1")
    return lp_norm_power(rho, m) / (m - 1.0) + interaction_energy(rho)


def steady_cells(grid, lam: float, M: float) -> np.ndarray:
    """Exact cell averages of the steady profile on ``grid``."""
    return np.diff(steady_cum_mass(grid.nodes, lam, M)) / grid.weights


def relative_entropy(rho: RadialDensity, lam: float, M: float | None = None) -> float:
    """H_lambda[rho] = int (sqrt rho - sqrt rho_bar)^2 / sqrt rho_bar.

    Returns +inf when the tail contributions do not decay.  ``M`` defaults
    to the mass of ``rho`` plus its recorded tail.
    """
    if M is None:
        M = rho.mass + rho.tail_mass
    bar = steady_cells(rho.grid, lam, M)
    contrib = rho.grid.weights * (np.sqrt(rho.rho) - np.sqrt(bar)) ** 2 / np.sqrt(bar)
    if tail_diverges(contrib, rho.grid):
        return np.inf
    return float(contrib.sum())


def gradient_sq_integral(f: np.ndarray, grid) -> float:
    """int |grad f|^2 for cell-centred values f.

    Differences between consecutive centres over the dual cells; a one-sided
    zero-slope closure at the origin and at R_max.
    """
    rc = grid.centers
    h = np.diff(rc)
    area = grid.sigma * grid.nodes[1:-1] ** (grid.d - 1)
    return float(np.sum(np.diff(f) ** 2 / h * area))


def dissipation_D(rho: RadialDensity) -> float:
    """D[rho] = 1/2 int |grad rho|^2 / rho^{3/2} - int rho^{3/2}.

    Evaluated through f = rho^{1/4}: the first term is 8 int |grad f|^2.
    """
    f = rho.rho**0.25
    return 8.0 * gradient_sq_integral(f, rho.grid) - lp_norm_power(rho, 1.5)


def key1_constant(M: float, lam: float) -> float:
    """Constant term 4 sqrt(M pi / lam) (1 - M / 8 pi) of dH/dt."""
    return 4.0 * sqrt(M * pi / lam) * (1.0 - M / (8 * pi))


@dataclass
class FreeEnergyReport:
    entropy: float
    interaction: float
    confinement: float
    F_PKS: Optional[float]
    F_rescaled: Optional[float]
    H_lambda: Optional[float]
    D: Optional[float]
    G: Optional[float]
    diffusion: Optional[float] = None
    lam: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        return {k: (None if v is None else ("inf" if v == np.inf else v)) for k, v in out.items()}


def free_energy_suite(rho: RadialDensity, lam: float = 1.0, rescaled: bool = False,
                      m: float | None = None) -> FreeEnergyReport:
    """Every functional applicable to the density's dimension."""
    inter = interaction_energy(rho)
    conf = 0.5 * second_moment(rho) if rescaled else 0.0
    if rho.d == 2:
        ent = entropy(rho)
        F = ent + inter
        return FreeEnergyReport(
            entropy=ent, interaction=inter, confinement=conf, F_PKS=F,
            F_rescaled=F + conf if rescaled else None,
            H_lambda=relative_entropy(rho, lam), D=dissipation_D(rho), G=None, lam=lam)
    if m is None:
        m = 2.0 * (1.0 - 1.0 / rho.d)
    diff = lp_norm_power(rho, m) / (m - 1.0)
    return FreeEnergyReport(
        entropy=entropy(rho), interaction=inter, confinement=conf, F_PKS=None, F_rescaled=None,
        H_lambda=None, D=None, G=diff + inter, diffusion=diff, lam=None)
